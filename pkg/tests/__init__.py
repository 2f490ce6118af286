"""Test package for flowline_maintenance."""

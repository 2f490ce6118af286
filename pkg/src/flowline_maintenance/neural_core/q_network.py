"""
Feed-forward Q-network: fully connected layers with ReLU between them and a
linear output unit per action, kept in float64.

The DDQN uses two instances, the online network (theta) and the target
network (theta'). Gradients come from torch.autograd on the mean squared
TD error of the chosen action only; Adam uses the (0.9, 0.999, 1e-8)
configuration.
"""

import copy
import math
from itertools import pairwise
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from flowline_maintenance.errors import ContractViolation

DTYPE = torch.float64
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


class QNetwork(nn.Module):
    def __init__(self, layer_sizes: Sequence[int]):
        super().__init__()
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError(f"invalid layer sizes {sizes}")
        self.layer_sizes = sizes

        layers: list[nn.Module] = []
        for k, (fan_in, fan_out) in enumerate(pairwise(sizes)):
            layers.append(nn.Linear(fan_in, fan_out, dtype=DTYPE))
            if k < len(sizes) - 2:
                layers.append(nn.ReLU())
        self.layers = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.layers(x)

    @property
    def linears(self) -> list[nn.Linear]:
        return [m for m in self.layers if isinstance(m, nn.Linear)]

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def network_layer_sizes(num_machines: int, hidden_sizes: Sequence[int]) -> list[int]:
    """[2i, h1, h2, i+1] for a line with i machines."""
    return [2 * num_machines, *hidden_sizes, num_machines + 1]


def init_params(layer_sizes: Sequence[int], rng: torch.Generator | int) -> QNetwork:
    """
    New network with weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) and zero biases.

    Args:
        layer_sizes: [inputs, hidden..., outputs].
        rng: torch generator or an integer seed.
    """
    generator = rng if isinstance(rng, torch.Generator) else torch.Generator().manual_seed(int(rng))
    net = QNetwork(layer_sizes)
    with torch.no_grad():
        for layer in net.linears:
            bound = 1.0 / math.sqrt(layer.in_features)
            layer.weight.uniform_(-bound, bound, generator=generator)
            layer.bias.zero_()
    return net


def clone_network(net: QNetwork) -> QNetwork:
    return copy.deepcopy(net)


def _as_batch(net: QNetwork, obs) -> torch.Tensor:
    x = torch.as_tensor(np.asarray(obs, dtype=np.float64), dtype=DTYPE)
    if x.shape[-1] != net.layer_sizes[0]:
        raise ContractViolation(f"observation length {x.shape[-1]} does not match input size {net.layer_sizes[0]}")
    return x


def forward(net: QNetwork, obs) -> np.ndarray:
    """Q-values for one observation (shape [i+1]) or a batch (shape [B, i+1])."""
    x = _as_batch(net, obs)
    with torch.no_grad():
        return net(x).numpy()


def td_loss(net: QNetwork, obs: torch.Tensor, actions: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean over the batch of (Q(s, a; theta) - target)^2; other outputs get no signal."""
    q_taken = net(obs).gather(1, actions.unsqueeze(1)).squeeze(1)
    return F.mse_loss(q_taken, targets)


def backward(net: QNetwork, batch: Sequence[tuple[np.ndarray, int, float]]) -> list[torch.Tensor]:
    """
    Gradients of the mean squared TD error w.r.t. every weight and bias.

    Args:
        batch: (observation, action index, target) items.

    Returns:
        one tensor per parameter, in `net.parameters()` order.
    """
    if len(batch) == 0:
        raise ContractViolation("backward needs a nonempty batch")
    obs = _as_batch(net, np.stack([np.asarray(item[0], dtype=np.float64) for item in batch]))
    actions = torch.as_tensor([int(item[1]) for item in batch], dtype=torch.long)
    targets = torch.as_tensor([float(item[2]) for item in batch], dtype=DTYPE)
    _, grads = batch_gradients(net, obs, actions, targets)
    return grads


def batch_gradients(
    net: QNetwork, obs: torch.Tensor, actions: torch.Tensor, targets: torch.Tensor
) -> tuple[float, list[torch.Tensor]]:
    """Tensor form of backward(); also returns the loss value."""
    loss = td_loss(net, obs, actions, targets)
    grads = torch.autograd.grad(loss, list(net.parameters()))
    return float(loss.item()), [g.detach() for g in grads]


def make_optimizer(net: QNetwork, lr: float) -> torch.optim.Adam:
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    return torch.optim.Adam(net.parameters(), lr=lr, betas=ADAM_BETAS, eps=ADAM_EPS)


def adam_step(
    net: QNetwork,
    grads: Sequence[torch.Tensor],
    optimizer: torch.optim.Adam,
    grad_clip_norm: float | None = None,
) -> int:
    """
    Apply one bias-corrected Adam update with the given gradients.

    Returns:
        the optimizer's step count after the update.
    """
    params = list(net.parameters())
    if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
        raise ContractViolation("gradient shapes do not match the network parameters")
    for p, g in zip(params, grads):
        p.grad = g.clone()
    if grad_clip_norm is not None:
        torch.nn.utils.clip_grad_norm_(params, max_norm=grad_clip_norm)
    optimizer.step()
    return adam_step_count(optimizer)


def adam_step_count(optimizer: torch.optim.Adam) -> int:
    for group in optimizer.param_groups:
        for p in group["params"]:
            state = optimizer.state.get(p)
            if state and "step" in state:
                return int(state["step"])
    return 0

"""Image-text fusion: project a frame feature to ``d``, concatenate, reduce."""

from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F

from .errors import InvalidArgumentError


def elu(x):
    return F.elu(x, alpha=1.0)


class ImageTextFusion(nn.Module):
    def __init__(self, visual_dim: int, d: int):
        super().__init__()
        self.visual_dim = visual_dim
        self.d = d
        self.visual_weight = nn.Parameter(torch.empty(d, visual_dim, dtype=torch.float64))
        self.visual_bias = nn.Parameter(torch.empty(d, dtype=torch.float64))
        self.combine_weight = nn.Parameter(torch.empty(d, 2 * d, dtype=torch.float64))
        self.combine_bias = nn.Parameter(torch.empty(d, dtype=torch.float64))

    @torch.no_grad()
    def reset_parameters(self, generator: torch.Generator, bound: float) -> None:
        for p in self.parameters():
            p.uniform_(-bound, bound, generator=generator)

    def project_visual(self, visual):
        if visual.shape[-1] != self.visual_dim:
            raise InvalidArgumentError(
                f"visual feature has length {visual.shape[-1]}, expected {self.visual_dim}"
            )
        return elu(visual @ self.visual_weight.T + self.visual_bias)

    def fuse(self, textual, visual_projected):
        if textual.shape[-1] != self.d or visual_projected.shape[-1] != self.d:
            raise InvalidArgumentError(
                f"fuse expects two length-{self.d} inputs, got "
                f"{textual.shape[-1]} and {visual_projected.shape[-1]}"
            )
        combined = torch.cat([textual, visual_projected], dim=-1)
        return elu(combined @ self.combine_weight.T + self.combine_bias)

    def forward(self, textual, visual):
        return self.fuse(textual, self.project_visual(visual))


def project_visual(vsl, module: ImageTextFusion):
    return module.project_visual(torch.as_tensor(vsl, dtype=torch.float64))


def fuse(textual, visual_projected, module: ImageTextFusion):
    return module.fuse(
        torch.as_tensor(textual, dtype=torch.float64),
        torch.as_tensor(visual_projected, dtype=torch.float64),
    )

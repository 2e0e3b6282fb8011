"""First-order validity of the loss expansion around the static anchor.

The covariance analysis treats the loss as linear in the fused latents
near h_static.  This module measures how fast that approximation breaks:
for a perturbation direction P,

    r(eps) = | phi(h + eps P) - phi(h) - eps <grad phi, P> |

should shrink quadratically, so the slope of log r against log eps sits
near 2.  A slope far from 2 would mean the marginal-contribution picture
is being applied outside its radius of validity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError
from ..model import ModelSpec, decode_forward
from ..numerics import Tape, bind_params, mse
from .anchors import phi_at

EPS_GRID = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)

# Residuals at or below this floor are floating-point noise, not curvature.
_NOISE_FLOOR = 1e-14


@dataclass(frozen=True)
class FirstOrderResult:
    eps: tuple[float, ...]
    residuals: tuple[float, ...]
    slope: float              # NaN when degenerate
    intercept: float          # NaN when degenerate
    degenerate: bool
    phi0: float
    directional: float        # <grad phi, P> at the anchor


def first_order_check(
    params: dict[str, np.ndarray],
    mspec: ModelSpec,
    h_anchor: np.ndarray,
    direction: np.ndarray,
    base: np.ndarray,
    hr: np.ndarray,
    eps_grid: tuple[float, ...] = EPS_GRID,
) -> FirstOrderResult:
    """Measure the expansion residual along ``direction`` from ``h_anchor``.

    ``h_anchor`` and ``direction`` are (N_p, d) latent blocks; ``base`` is
    the image estimate the decoder adds onto and ``hr`` the target.  If the
    direction is numerically zero, or the residuals never rise above the
    floating-point floor, the fit is meaningless and the result comes back
    degenerate with NaN slope rather than a fabricated number.
    """
    if h_anchor.shape != direction.shape:
        raise DimensionError(
            f"anchor {h_anchor.shape} and direction {direction.shape} differ"
        )

    tape = Tape()
    h_leaf = tape.leaf(h_anchor[None], "h")
    leaves = bind_params(tape, params)
    pred = decode_forward(tape, leaves, mspec, h_leaf, base[None])
    phi0_node = mse(pred, hr[None])
    phi0 = float(phi0_node.val)
    grad_h = tape.backward(phi0_node)["h"][0]
    directional = float(np.sum(grad_h * direction))

    scale = max(1.0, abs(phi0))
    if float(np.abs(direction).max(initial=0.0)) < 1e-12:
        return FirstOrderResult(
            eps=tuple(eps_grid),
            residuals=tuple(0.0 for _ in eps_grid),
            slope=float("nan"),
            intercept=float("nan"),
            degenerate=True,
            phi0=phi0,
            directional=directional,
        )

    residuals = []
    for eps in eps_grid:
        phi_eps = phi_at(params, mspec, h_anchor + eps * direction, base, hr)
        residuals.append(abs(phi_eps - phi0 - eps * directional))

    usable = [
        (np.log10(e), np.log10(r))
        for e, r in zip(eps_grid, residuals)
        if r > _NOISE_FLOOR * scale
    ]
    if len(usable) < 2:
        return FirstOrderResult(
            eps=tuple(eps_grid),
            residuals=tuple(residuals),
            slope=float("nan"),
            intercept=float("nan"),
            degenerate=True,
            phi0=phi0,
            directional=directional,
        )
    xs = np.array([u[0] for u in usable])
    ys = np.array([u[1] for u in usable])
    slope, intercept = np.polyfit(xs, ys, 1)
    return FirstOrderResult(
        eps=tuple(eps_grid),
        residuals=tuple(residuals),
        slope=float(slope),
        intercept=float(intercept),
        degenerate=False,
        phi0=phi0,
        directional=directional,
    )

"""Generalization-bound calculators.

Two routes to a risk penalty are implemented: a Rademacher / chaining route
(``delta_rad``) and a scale-sensitive covering route (``delta_fat``);
``delta_combined`` takes their pointwise minimum. All formulas read ``log``
as the natural logarithm, and every report records that convention.

The scale-sensitive bound ships in two variants: ``"printed"`` uses a
``(16 L)**D`` covering term, ``"lemma"`` uses ``(64 L)**D`` as obtained by
instantiating the class-entropy bound at resolution 1/4. Only the lemma
variant produces a crossover between the two routes in the usual plotting
regime; both are exposed everywhere a penalty is computed.

All calculators accept numpy arrays for the Lipschitz argument and
broadcast, which is what the CLI sweep and the model-selection search use.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

LOG_CONVENTION = "natural"
FAT_VARIANTS = ("printed", "lemma")


@dataclass(frozen=True)
class BoundParams:
    """Inputs shared by every penalty calculator.

    ``eta`` is the slack of an approximate nearest-neighbor oracle; a
    positive value inflates the effective Lipschitz constant to
    ``lipschitz * (1 + eta)`` before any formula is evaluated.
    """

    n: int
    lipschitz: float
    ddim: float
    n_classes: int
    delta: float = 0.01
    eta: float = 0.0

    def __post_init__(self):
        if not (int(self.n) == self.n and self.n >= 1):
            raise InputError(f"n must be a positive integer, got {self.n}")
        if not (self.lipschitz > 0 and math.isfinite(self.lipschitz)):
            raise InputError(f"lipschitz must be positive, got {self.lipschitz}")
        if not (self.ddim >= 0):
            raise InputError(f"ddim must be nonnegative, got {self.ddim}")
        if not (int(self.n_classes) == self.n_classes and self.n_classes >= 2):
            raise InputError(f"n_classes must be an integer >= 2, got {self.n_classes}")
        if not (0.0 < self.delta < 1.0):
            raise InputError(f"delta must lie strictly inside (0, 1), got {self.delta}")
        if not (self.eta >= 0):
            raise InputError(f"eta must be nonnegative, got {self.eta}")

    @property
    def effective_lipschitz(self) -> float:
        return self.lipschitz * (1.0 + self.eta)


@dataclass(frozen=True)
class BoundValue:
    """Computed penalties at one parameter point; combined = min of the two."""

    delta_rad: float
    delta_fat: float
    combined: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "delta_rad": self.delta_rad,
            "delta_fat": self.delta_fat,
            "combined": self.combined,
            "details": dict(self.details),
        }


def entropy_bound(epsilon: float, lipschitz: float, ddim: float, n_classes: int):
    """Log covering number of the truncated margin-score class at ``epsilon``:
    (16 L / eps)**D * ln(5 k / eps)."""
    if np.any(np.asarray(epsilon) <= 0):
        raise InputError("epsilon must be positive")
    eps = np.asarray(epsilon, dtype=np.float64)
    val = (16.0 * lipschitz / eps) ** ddim * np.log(5.0 * n_classes / eps)
    return float(val) if np.isscalar(epsilon) else val


def rademacher_bound(n, lipschitz, ddim: float, n_classes: int):
    """Rademacher complexity bound 2 L (ln(5k) / n)**(1/(D+1))."""
    lip = np.asarray(lipschitz, dtype=np.float64)
    val = 2.0 * lip * (np.log(5.0 * n_classes) / n) ** (1.0 / (ddim + 1.0))
    return float(val) if np.isscalar(lipschitz) else val


def chaining_alpha_star(n, lipschitz, ddim: float, n_classes: int):
    """Truncation point of the chaining integral that yields the closed form:
    (9 (16 L)**D ln(5k) / n)**(1/(D+1))."""
    lip = np.asarray(lipschitz, dtype=np.float64)
    val = (9.0 * (16.0 * lip) ** ddim * np.log(5.0 * n_classes) / n) ** (1.0 / (ddim + 1.0))
    return float(val) if np.isscalar(lipschitz) else val


def _rad_terms(n, lip, ddim, n_classes, delta):
    """The three additive pieces of the Rademacher-route penalty.

    The stratification term reads sqrt(ln(log2(2L)) / n) and is only
    meaningful for L > 1; its inner quantity is clamped at zero otherwise.
    """
    lip = np.asarray(lip, dtype=np.float64)
    complexity = 4.0 * rademacher_bound(n, lip, ddim, n_classes)
    inner = np.log2(np.maximum(2.0 * lip, 1.0))
    strat_inner = np.where(inner > 1.0, np.log(np.maximum(inner, 1.0)), 0.0)
    stratification = np.sqrt(strat_inner / n)
    confidence = np.sqrt(math.log(2.0 / delta) / (2.0 * n)) * np.ones_like(lip)
    return complexity, stratification, confidence


def delta_rad(p: BoundParams) -> float:
    """Rademacher-route penalty: 8L(ln 5k / n)**(1/(D+1)) + stratification
    + confidence terms."""
    c, s, conf = _rad_terms(p.n, p.effective_lipschitz, p.ddim, p.n_classes, p.delta)
    return float(c + s + conf)


def _fat_terms(n, lip, ddim, n_classes, delta, variant):
    """Pieces of the scale-sensitive penalty.

    ln(2L/delta) is clamped at zero when 2L <= delta, mirroring the
    stratification clamp on the Rademacher side.
    """
    if variant not in FAT_VARIANTS:
        raise InputError(f"fat variant must be one of {FAT_VARIANTS}, got {variant!r}")
    coeff = 16.0 if variant == "printed" else 64.0
    lip = np.asarray(lip, dtype=np.float64)
    entropy_term = 2.0 * (coeff * lip) ** ddim * math.log(20.0 * n_classes)
    tail_term = np.maximum(np.log(np.maximum(2.0 * lip / delta, 1.0)), 0.0)
    sqrt_part = np.sqrt((2.0 / n) * (entropy_term + tail_term))
    return entropy_term, tail_term, sqrt_part


def delta_fat(p: BoundParams, variant: str = "printed") -> float:
    """Scale-sensitive penalty sqrt((2/n)(2 (cL)**D ln(20k) + ln(2L/delta))) + 1/n."""
    _, _, sqrt_part = _fat_terms(
        p.n, p.effective_lipschitz, p.ddim, p.n_classes, p.delta, variant
    )
    return float(sqrt_part + 1.0 / p.n)


def delta_combined(p: BoundParams, fat_variant: str = "printed") -> BoundValue:
    """Pointwise minimum of the two penalty routes, with a term breakdown."""
    lip = p.effective_lipschitz
    comp, strat, conf = _rad_terms(p.n, lip, p.ddim, p.n_classes, p.delta)
    rad = float(comp + strat + conf)
    ent, tail, sqrt_part = _fat_terms(p.n, lip, p.ddim, p.n_classes, p.delta, fat_variant)
    fat = float(sqrt_part + 1.0 / p.n)
    details = {
        "log_convention": LOG_CONVENTION,
        "lipschitz": p.lipschitz,
        "effective_lipschitz": lip,
        "eta": p.eta,
        "rad_complexity_term": float(comp),
        "rad_stratification_term": float(strat),
        "rad_stratification_clamped": bool(strat == 0.0 and lip <= 1.0),
        "rad_confidence_term": float(conf),
        "alpha_star": chaining_alpha_star(p.n, lip, p.ddim, p.n_classes),
        "fat_variant": fat_variant,
        "fat_entropy_term": float(ent),
        "fat_tail_term": float(tail),
        "fat_tail_clamped": bool(tail == 0.0),
        "ddim": p.ddim,
        "n": p.n,
        "n_classes": p.n_classes,
        "delta": p.delta,
    }
    return BoundValue(delta_rad=rad, delta_fat=fat, combined=min(rad, fat), details=details)


def dimred_bound(
    lipschitz: float,
    perturbation_cost: float,
    perturbed_ddim: float,
    n_classes: int,
    n: int,
    constant: float = 1.0,
    form: str = "theorem",
) -> float:
    """Empirical Rademacher bound when the sample admits a low-dimensional
    relocation with total movement ``perturbation_cost`` landing in doubling
    dimension ``perturbed_ddim``.

    ``form="theorem"`` evaluates constant * L * (cost + (ln 5k / n)**(1/(1+dim)));
    ``form="chain"`` evaluates the explicit two-term derivation
    2 L (ln 5k / n)**(1/(dim+1)) + L * cost / n, whose cost term carries the
    extra 1/n from averaging. With zero cost the chain form coincides with
    ``rademacher_bound`` at the reduced dimension.
    """
    if perturbation_cost < 0:
        raise InputError("perturbation cost must be nonnegative")
    if perturbed_ddim < 0:
        raise InputError("perturbed ddim must be nonnegative")
    if not constant > 0:
        raise InputError("constant must be positive")
    base = (math.log(5.0 * n_classes) / n) ** (1.0 / (perturbed_ddim + 1.0))
    if form == "theorem":
        return float(constant * lipschitz * (perturbation_cost + base))
    if form == "chain":
        return float(2.0 * lipschitz * base + lipschitz * perturbation_cost / n)
    raise InputError(f"form must be 'theorem' or 'chain', got {form!r}")


def sweep_grid(
    lipschitz_values,
    n: int,
    ddim: float,
    n_classes: int,
    delta: float,
    eta: float = 0.0,
    fat_variant: str = "printed",
) -> dict:
    """Vectorized penalty sweep over an array of Lipschitz constants.

    Returns arrays ``delta_rad``, ``delta_fat``, ``combined`` plus the
    elementwise ``winner`` ("rad" or "fat", ties going to "rad").
    """
    lip = np.asarray(lipschitz_values, dtype=np.float64)
    if lip.size == 0:
        raise InputError("empty Lipschitz grid")
    if np.any(lip <= 0):
        raise InputError("Lipschitz grid values must be positive")
    eff = lip * (1.0 + eta)
    comp, strat, conf = _rad_terms(n, eff, ddim, n_classes, delta)
    rad = comp + strat + conf
    _, _, sqrt_part = _fat_terms(n, eff, ddim, n_classes, delta, fat_variant)
    fat = sqrt_part + 1.0 / n
    combined = np.minimum(rad, fat)
    winner = np.where(rad <= fat, "rad", "fat")
    return {
        "lipschitz": lip,
        "delta_rad": rad,
        "delta_fat": fat,
        "combined": combined,
        "winner": winner,
    }

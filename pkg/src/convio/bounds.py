"""Analytic vertex-generation bounds and I/O lower bounds.

Per sub-computation step j, phi_j(k) bounds the vertices of step j a
k-vertex dominator slice can generate, and psi_j(k) bounds how many of
those land in the step's output set. T(S) combines them across steps into
an upper bound on any S-partition subset, which yields the composite
lower bound Q >= S * (|V| / T(2S) - 1).

Square roots force floating point; everything else stays exact. The
shared-term evaluation order below keeps the generic maximization
bit-identical to the closed forms at the analytic maximizer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

from .model import ConvShape, WinogradParams, reuse_factor
from .dag import (
    dc_internal_output_count,
    wa_internal_output_count,
    pad_shape_for_winograd,
)

T_EXHAUSTIVE_CAP = 64


# -- per-step generation bounds ---------------------------------------------


def phi_psi_dc(step: int, k: float, s: int, r_factor) -> tuple[float, float]:
    """Per-step (phi, psi) for direct convolution; step 2 is terminal."""
    if k <= 0:
        return 0.0, 0.0
    if step == 1:
        v = 2.0 * s * math.sqrt(float(r_factor) * k)
        return v, v
    if step == 2:
        return max(k - 1.0, 0.0), 0.0
    raise ValueError(f"direct convolution has steps 1..2, got {step}")


def phi_psi_wa(
    step: int, k: float, s: int, e: int, r: int, phi4_proof_variant: bool = False
) -> tuple[float, float]:
    """Per-step (phi, psi) for the Winograd algorithm (4 steps).

    The step-4 bound follows the stated form min{(2k-1)e^2, (2m^2-1)S};
    ``phi4_proof_variant`` switches to the proof's min{e^2 k - 1, ...}
    for comparison.
    """
    if k <= 0:
        return 0.0, 0.0
    m2 = (e + r - 1) ** 2
    if step == 1:
        return 6.0 * k * m2 * m2 / (e * r), 3.0 * k * m2 / (e * r)
    if step == 2:
        v = k * math.sqrt(k) + m2 * s * math.sqrt(k) / (e * e)
        return v, v
    if step == 3:
        return max(k - 1.0, 0.0), min(k / 2.0, s * m2 / (e * e))
    if step == 4:
        first = (e * e) * k - 1.0 if phi4_proof_variant else (2.0 * k - 1.0) * e * e
        return max(min(first, (2.0 * m2 - 1.0) * s), 0.0), 0.0
    raise ValueError(f"winograd has steps 1..4, got {step}")


@dataclass(frozen=True)
class PhiPsiProfile:
    """Per-step bound functions for one algorithm, with its context."""

    algorithm: str
    n_steps: int
    r_factor: Fraction | None = None
    e: int | None = None
    r: int | None = None
    phi4_proof_variant: bool = False

    def phi_psi(self, step: int, k: float, s: int) -> tuple[float, float]:
        if self.algorithm == "direct":
            return phi_psi_dc(step, k, s, self.r_factor)
        return phi_psi_wa(step, k, s, self.e, self.r, self.phi4_proof_variant)

    def phi(self, step: int, k: float, s: int) -> float:
        return self.phi_psi(step, k, s)[0]

    def psi(self, step: int, k: float, s: int) -> float:
        return self.phi_psi(step, k, s)[1]


def dc_profile(r_factor) -> PhiPsiProfile:
    return PhiPsiProfile("direct", 2, r_factor=Fraction(r_factor))


def wa_profile(e: int, r: int, phi4_proof_variant: bool = False) -> PhiPsiProfile:
    return PhiPsiProfile("winograd", 4, e=e, r=r, phi4_proof_variant=phi4_proof_variant)


# -- T(S): subset-size upper bound ------------------------------------------


def _t_term(profile: PhiPsiProfile, s: int, ks: tuple[int, ...]) -> float:
    """S + phi_1(k_1) + phi_2(k_2 + psi_1(k_1)) + ... for one budget split."""
    value = float(s)
    carry = 0.0
    for j, k in enumerate(ks, start=1):
        arg = k + carry
        phi, psi = profile.phi_psi(j, arg, s)
        value += phi
        carry = psi
    return value


def t_upper_generic_argmax(
    profile: PhiPsiProfile, s: int, exhaustive_cap: int = T_EXHAUSTIVE_CAP
) -> tuple[float, tuple[int, ...]]:
    """T(S) with its integer budget maximizer.

    Small budgets are maximized exhaustively over the integer simplex
    (the trailing step always takes the leftover budget: every phi is
    nondecreasing). Larger budgets start from the analytic maximizer
    (whole budget on k_1) and hill-climb by unit transfers.
    """
    n = profile.n_steps
    if s <= 0:
        return 0.0, (0,) * n

    def complete(prefix: tuple[int, ...]) -> tuple[int, ...]:
        return prefix + (s - sum(prefix),)

    if s <= exhaustive_cap:
        best, best_ks = -math.inf, None
        stack = [()]
        while stack:
            prefix = stack.pop()
            if len(prefix) == n - 1:
                ks = complete(prefix)
                val = _t_term(profile, s, ks)
                if val > best or (val == best and ks > best_ks):
                    best, best_ks = val, ks
                continue
            budget = s - sum(prefix)
            for k in range(budget + 1):
                stack.append(prefix + (k,))
        return best, best_ks

    ks = [s] + [0] * (n - 1)
    best = _t_term(profile, s, tuple(ks))
    improved = True
    while improved:
        improved = False
        for i in range(n):
            for j in range(n):
                if i == j or ks[i] == 0:
                    continue
                cand = list(ks)
                cand[i] -= 1
                cand[j] += 1
                val = _t_term(profile, s, tuple(cand))
                if val > best:
                    best, ks, improved = val, cand, True
    return best, tuple(ks)


def t_upper_generic(
    profile: PhiPsiProfile, s: int, exhaustive_cap: int = T_EXHAUSTIVE_CAP
) -> float:
    return t_upper_generic_argmax(profile, s, exhaustive_cap)[0]


def t_upper_dc(s: int, r_factor) -> float:
    """Closed form 4*S*sqrt(R*S) + S - 1 for the two-step direct convolution."""
    if s <= 0:
        return 0.0
    a = 2.0 * s * math.sqrt(float(Fraction(r_factor)) * s)
    # evaluated as S + phi_1(S) + phi_2(psi_1(S)) so it matches the generic
    # maximization bit for bit
    return float(s) + a + (a - 1.0)


def t_upper_wa(s: int, e: int, r: int) -> float:
    """2*m^3/(e*r) * S*sqrt(S) + 6*m^2/(e*r) * S with m = e + r - 1."""
    if s <= 0:
        return 0.0
    m = e + r - 1
    return 2.0 * m ** 3 / (e * r) * s * math.sqrt(s) + 6.0 * m ** 2 / (e * r) * s


# -- lower-bound reports ------------------------------------------------------


@dataclass
class BoundReport:
    """Closed-form and pre-asymptotic lower bounds with audit intermediates."""

    algorithm: str
    s: int
    v_count: int
    t_2s: float
    q_exact_raw: float
    omega: float
    k_maximizers: tuple[int, ...]
    context: dict = field(default_factory=dict)

    @property
    def q_exact(self) -> float:
        """Exact composite bound, clamped at zero (negative bounds are vacuous)."""
        return max(self.q_exact_raw, 0.0)

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "s": self.s,
            "v_count": self.v_count,
            "t_2s": self.t_2s,
            "q_exact_raw": self.q_exact_raw,
            "q_exact": self.q_exact,
            "omega": self.omega,
            "k_maximizers": list(self.k_maximizers),
            "context": self.context,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)


def lower_bound_dc(shape: ConvShape, s: int) -> BoundReport:
    """Per-image direct convolution bounds for fast memory of s words."""
    r = reuse_factor(shape)
    k = shape.window_size
    v_count = dc_internal_output_count(shape if shape.n == 1 else replace(shape, n=1))
    omega = k * shape.outputs_per_image / (4.0 * math.sqrt(2.0 * float(r) * s))
    t2s = t_upper_dc(2 * s, r)
    q_raw = s * (v_count / t2s - 1.0)
    return BoundReport(
        "direct", s, v_count, t2s, q_raw, omega, (2 * s, 0),
        context={
            "reuse_factor": str(r),
            "window": k,
            "outputs": shape.outputs_per_image,
        },
    )


def lower_bound_wa(shape: ConvShape, p: WinogradParams, s: int) -> BoundReport:
    """Per-image Winograd bounds; non-divisible outputs are padded up to e."""
    p.check_shape(shape)
    padded = shape
    if shape.w_out % p.e or shape.h_out % p.e:
        padded = pad_shape_for_winograd(shape, p)
    if padded.n != 1:
        padded = replace(padded, n=1)
    v_count = wa_internal_output_count(padded, p)
    omega = (
        shape.outputs_per_image * shape.c_in * (p.e + p.r - 1) * p.r
        / (p.e * math.sqrt(s))
    )
    t2s = t_upper_wa(2 * s, p.e, p.r)
    q_raw = s * (v_count / t2s - 1.0)
    return BoundReport(
        "winograd", s, v_count, t2s, q_raw, omega, (2 * s, 0, 0, 0),
        context={
            "e": p.e,
            "r": p.r,
            "outputs": shape.outputs_per_image,
            "c_in": shape.c_in,
        },
    )

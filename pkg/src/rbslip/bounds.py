"""Analytic upper bounds on the Nusselt number for Navier-slip walls.

All unknown constants are set to 1.  Three formulas apply depending on the
slip length:

* ``ls = inf``: ``Ra^(5/12)``
* ``1 <= ls < inf``: ``Ra^(5/12) + ls^(-1/6) Pr^(-1/6) Ra^(1/2)``
* ``0 < ls < 1``: ``ls^(-1/3) Ra^(1/3) + ls^(-2/3) Pr^(-1/6) Ra^(1/2)
  + ls^(-2/13) Ra^(5/13) + Ra^(5/12)``

:func:`region_classify` locates a parameter triple in the case table of
dominant terms, and :func:`delta_optimal` returns the boundary-layer
thickness that minimises the localized heat-flux estimate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction as F
from typing import NamedTuple

import numpy as np

__all__ = [
    "TERMS",
    "BoundReport",
    "TableCell",
    "bound_terms",
    "bound_value",
    "region_classify",
    "band_distance",
    "delta_optimal",
    "delta_scaling",
    "delta_bruteforce",
    "localization_rhs",
]


class Term(NamedTuple):
    ra: F
    pr: F
    ls: F
    text: str


#: Summands of the bound, keyed by label; exponents of (Ra, Pr, ls).
TERMS = {
    "RA_5_12": Term(F(5, 12), F(0), F(0), "Nu <~ Ra^(5/12)"),
    "LS_16_PR_16_RA_12": Term(F(1, 2), F(-1, 6), F(-1, 6), "Nu <~ Ls^(-1/6) Pr^(-1/6) Ra^(1/2)"),
    "LS_13_RA_13": Term(F(1, 3), F(0), F(-1, 3), "Nu <~ Ls^(-1/3) Ra^(1/3)"),
    "LS_23_PR_16_RA_12": Term(F(1, 2), F(-1, 6), F(-2, 3), "Nu <~ Ls^(-2/3) Pr^(-1/6) Ra^(1/2)"),
    "LS_213_RA_513": Term(F(5, 13), F(0), F(-2, 13), "Nu <~ Ls^(-2/13) Ra^(5/13)"),
}

_FORMULAS = {
    "FREE_SLIP_512": ("RA_5_12",),
    "LS_GE1_MIXED": ("RA_5_12", "LS_16_PR_16_RA_12"),
    "LS_LT1_MIXED": ("LS_13_RA_13", "LS_23_PR_16_RA_12", "LS_213_RA_513", "RA_5_12"),
}


def _check(ra: float, pr: float, ls: float) -> None:
    if not (ra > 0 and math.isfinite(ra)):
        raise ValueError(f"ra must be positive and finite, got {ra}")
    if not pr > 0:
        raise ValueError(f"pr must be positive (or inf), got {pr}")
    if not ls > 0:
        raise ValueError(f"slip length must be positive (or inf), got {ls}")


def _power(base: float, e: F) -> float:
    """``base**e`` with ``inf**0 = 1`` and ``inf**negative = 0``."""
    if e == 0:
        return 1.0
    if math.isinf(base):
        return 0.0 if e < 0 else math.inf
    return base ** float(e)


def _term_value(label: str, ra: float, pr: float, ls: float) -> float:
    t = TERMS[label]
    return _power(ra, t.ra) * _power(pr, t.pr) * _power(ls, t.ls)


def _formula(ls: float) -> str:
    if math.isinf(ls):
        return "FREE_SLIP_512"
    return "LS_GE1_MIXED" if ls >= 1.0 else "LS_LT1_MIXED"


def bound_terms(ra: float, pr: float, ls: float, formula: str | None = None) -> dict:
    """Values of the summands of ``formula`` (default: the one valid for ``ls``)."""
    _check(ra, pr, ls)
    formula = formula or _formula(ls)
    if formula not in _FORMULAS:
        raise ValueError(f"unknown formula {formula!r}")
    return {lab: _term_value(lab, ra, pr, ls) for lab in _FORMULAS[formula]}


@dataclass(frozen=True)
class BoundReport:
    region_label: str
    dominant_term: str
    value: float
    exponents: tuple  # (ra, pr, ls) of the dominant term
    delta_star: float
    table_row: str

    def text(self) -> str:
        e = ", ".join(str(x) for x in self.exponents)
        return (
            f"region        {self.region_label}\n"
            f"dominant term {self.dominant_term}  (exponents Ra, Pr, Ls = {e})\n"
            f"bound value   {self.value:.6g}  (unit constants)\n"
            f"delta*        {self.delta_star:.6g}\n"
            f"table cell    {self.table_row}\n"
            "note          valid for Ra large enough that ||u0||_W14 <~ Ra"
        )


def _unpack(params):
    return float(params.ra), float(params.pr), float(params.ls)


def bound_value(params) -> BoundReport:
    """Evaluate the applicable bound and identify its largest summand."""
    ra, pr, ls = _unpack(params)
    terms = bound_terms(ra, pr, ls)
    dom = max(terms, key=terms.get)
    t = TERMS[dom]
    value = sum(terms.values())
    cell = region_classify(params)
    return BoundReport(
        region_label=_formula(ls),
        dominant_term=dom,
        value=value,
        exponents=(t.ra, t.pr, t.ls),
        delta_star=delta_optimal(params, max(value, 1.0)),
        table_row=cell.text,
    )


# ---------------------------------------------------------------------------
# case table

class TableCell(NamedTuple):
    band: str  # Prandtl band
    condition: str  # slip-length condition
    term: str  # label of the dominant term

    @property
    def text(self) -> str:
        return f"{self.band} ; {self.condition} -> {TERMS[self.term].text}"


def _pr_bands(ra: float, pr: float):
    """Prandtl bands as (name, lower, upper) with closed ends."""
    return [
        ("Ra^(11/7) <= Pr", ra ** (11 / 7), math.inf),
        ("Ra^(4/3) <= Pr <= Ra^(11/7)", ra ** (4 / 3), ra ** (11 / 7)),
        ("Ra^(1/2) <= Pr <= Ra^(4/3)", ra**0.5, ra ** (4 / 3)),
        ("Pr <= Ra^(1/2)", 0.0, ra**0.5),
    ]


def _ls_cells(band: int, ra: float, pr: float):
    """Slip-length cells of one band: (condition, lower, upper, term)."""
    inf = math.inf
    inv_pr = 0.0 if math.isinf(pr) else 1.0 / pr
    if band == 0:
        a = ra ** (-5 / 24)
        b = ra ** (-2 / 7)
        c = math.sqrt(inv_pr) * ra**0.5
        return [
            ("Ra^(-5/24) <= Ls", a, inf, "RA_5_12"),
            ("Ra^(-2/7) <= Ls <= Ra^(-5/24)", b, a, "LS_213_RA_513"),
            ("Pr^(-1/2) Ra^(1/2) <= Ls <= Ra^(-2/7)", c, b, "LS_13_RA_13"),
            ("Ls <= Pr^(-1/2) Ra^(1/2)", 0.0, c, "LS_23_PR_16_RA_12"),
        ]
    if band == 1:
        a = ra ** (-5 / 24)
        b = pr ** (-13 / 40) * ra ** (9 / 40)
        return [
            ("Ra^(-5/24) <= Ls", a, inf, "RA_5_12"),
            ("Pr^(-13/40) Ra^(9/40) <= Ls <= Ra^(-5/24)", b, a, "LS_213_RA_513"),
            ("Ls <= Pr^(-13/40) Ra^(9/40)", 0.0, b, "LS_23_PR_16_RA_12"),
        ]
    if band == 2:
        a = pr ** (-1 / 4) * ra ** (1 / 8)
        return [
            ("Pr^(-1/4) Ra^(1/8) <= Ls", a, inf, "RA_5_12"),
            ("Ls <= Pr^(-1/4) Ra^(1/8)", 0.0, a, "LS_23_PR_16_RA_12"),
        ]
    a = inv_pr * ra**0.5
    return [
        ("Pr^(-1) Ra^(1/2) <= Ls", a, inf, "RA_5_12"),
        ("1 <= Ls <= Pr^(-1) Ra^(1/2)", 1.0, a, "LS_16_PR_16_RA_12"),
        ("Ls <= 1", 0.0, 1.0, "LS_23_PR_16_RA_12"),
    ]


def _inside(x: float, lo: float, hi: float, rtol: float) -> bool:
    return lo * (1 - rtol) <= x <= hi * (1 + rtol) if math.isfinite(hi) else x >= lo * (1 - rtol)


def _candidates(ra: float, pr: float, ls: float, rtol: float = 1e-12):
    out = []
    for i, (bname, lo, hi) in enumerate(_pr_bands(ra, pr)):
        if not _inside(pr, lo, hi, rtol):
            continue
        for cond, a, b, term in _ls_cells(i, ra, pr):
            if a <= b * (1 + rtol) and _inside(ls, a, b, rtol):
                out.append(TableCell(bname, cond, term))
    return out


def region_classify(params) -> TableCell:
    """The case-table cell containing ``(Ra, Pr, ls)``.

    On a band boundary several cells qualify; the one with the smaller
    bound term wins.  Requires ``Ra >= 1`` (the bands are ordered only then).
    """
    ra, pr, ls = _unpack(params)
    _check(ra, pr, ls)
    if ra < 1:
        raise ValueError(f"the case table assumes Ra >= 1, got {ra}")
    cands = _candidates(ra, pr, ls)
    if not cands:  # pragma: no cover - the bands cover the whole quadrant
        raise RuntimeError(f"no table cell for Ra={ra}, Pr={pr}, Ls={ls}")
    return min(cands, key=lambda c: _term_value(c.term, ra, pr, ls))


def band_distance(params) -> float:
    """Smallest relative distance ``|x / threshold - 1|`` to any band edge
    relevant at this point (Prandtl edges and the slip edges of its band)."""
    ra, pr, ls = _unpack(params)
    dist = math.inf
    for i, (_, lo, hi) in enumerate(_pr_bands(ra, pr)):
        for edge in (lo, hi):
            if 0 < edge < math.inf and math.isfinite(pr):
                dist = min(dist, abs(pr / edge - 1))
        if _inside(pr, lo, hi, 0.0):
            for _, a, b, _ in _ls_cells(i, ra, pr):
                for edge in (a, b):
                    if 0 < edge < math.inf and math.isfinite(ls):
                        dist = min(dist, abs(ls / edge - 1))
    return dist


# ---------------------------------------------------------------------------
# boundary-layer thickness

def _rhs_coefficient(ra: float, pr: float, ls: float, nu: float) -> float:
    """``S`` in the estimate ``Nu <= C delta^3 S + 2/delta`` (C = 1)."""
    inv_ls = 0.0 if math.isinf(ls) else 1.0 / ls
    inv_pr = 0.0 if math.isinf(pr) else 1.0 / pr
    return (
        inv_ls * nu * ra
        + max(1.0, inv_ls**1.5) * math.sqrt(inv_ls) * math.sqrt(inv_pr) * nu * ra**1.5
        + math.sqrt(inv_ls) * nu**0.75 * ra**1.25
        + nu * ra**1.25
    )


def localization_rhs(params, nu: float, delta):
    """``delta^3 S + 2/delta`` with unit constant."""
    ra, pr, ls = _unpack(params)
    s = _rhs_coefficient(ra, pr, ls, nu)
    delta = np.asarray(delta, dtype=float)
    return delta**3 * s + 2.0 / delta


def delta_optimal(params, nu_hypothesis: float) -> float:
    """Minimiser of ``delta^3 S + 2/delta``, i.e. ``(2 / (3 S))^(1/4)``, clamped to 1."""
    if not nu_hypothesis >= 1:
        raise ValueError(f"nu_hypothesis must be >= 1, got {nu_hypothesis}")
    ra, pr, ls = _unpack(params)
    _check(ra, pr, ls)
    s = _rhs_coefficient(ra, pr, ls, nu_hypothesis)
    return min(1.0, (2.0 / (3.0 * s)) ** 0.25)


def delta_scaling(params, nu_hypothesis: float) -> tuple[float, str]:
    """Constant-free thickness from the asymptotic case analysis.

    Returns ``(delta, branch)`` with ``branch`` one of ``"free_slip"``,
    ``"ls_ge_1"``, ``"ls_lt_1_a"`` and ``"ls_lt_1_b"``.
    """
    if not nu_hypothesis >= 1:
        raise ValueError(f"nu_hypothesis must be >= 1, got {nu_hypothesis}")
    ra, pr, ls = _unpack(params)
    _check(ra, pr, ls)
    nu = nu_hypothesis
    inv_pr = 0.0 if math.isinf(pr) else 1.0 / pr
    if math.isinf(ls):
        d, br = ra ** (-5 / 16) * nu**-0.25, "free_slip"
    elif ls >= 1:
        d = nu**-0.25 * (ls**-0.5 * math.sqrt(inv_pr) * ra**1.5 + ra**1.25) ** -0.25
        br = "ls_ge_1"
    else:
        lhs = ls**-0.5 * ra**-0.25 + ls**-1.5 * math.sqrt(inv_pr) * ra**0.25 + ls**0.5
        if lhs >= nu**-0.25:
            d = nu**-0.25 * (ra / ls + ls**-2 * math.sqrt(inv_pr) * ra**1.5 + ra**1.25) ** -0.25
            br = "ls_lt_1_a"
        else:
            d, br = ls**0.125 * nu ** (-3 / 16) * ra ** (-5 / 16), "ls_lt_1_b"
    return min(1.0, d), br


def delta_bruteforce(params, nu_hypothesis: float, points: int = 100_000,
                     lo: float = 1e-8, hi: float = 1.0) -> float:
    """Grid minimiser of ``delta^3 S + 2/delta`` over log-spaced ``delta``."""
    grid = np.logspace(math.log10(lo), math.log10(hi), points)
    vals = localization_rhs(params, nu_hypothesis, grid)
    return float(grid[int(np.argmin(vals))])

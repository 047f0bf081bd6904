"""Seeded verification suites behind ``specmhd verify``.

Each suite draws its samples from one seed, evaluates every sample, and
returns a SuiteReport listing all of them plus a pass flag for the
invariants that can be asserted.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import counterexample as cx
from .nonlinear import gradient_estimate_bound, gradient_estimate_check, probe_sweep
from .spectral import SpectralGrid, cutoff_bound, random_scalar

DEFAULT_SEED = 7
LEMMA_DELTAS = (0.05, 0.1, 0.3)


@dataclass
class SuiteReport:
    name: str
    seed: int
    columns: tuple
    rows: list = field(default_factory=list)
    passed: bool = True
    summary: dict = field(default_factory=dict)

    @property
    def samples(self) -> int:
        return len(self.rows)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([repr(v) if isinstance(v, float) else v for v in row])


# ---------------------------------------------------------------- estimate probes

def _probe_suite(name, kinds, seed, samples=100, s=1.5, K_R=8):
    rows, summary, ok = [], {}, True
    for kind in kinds:
        rep = probe_sweep(kind, samples=samples, s=s, K_R=K_R, seed=seed)
        again = probe_sweep(kind, samples=min(3, samples), s=s, K_R=K_R, seed=seed)
        reproducible = again.ratios == rep.ratios[: again.samples]
        finite = all(math.isfinite(r) and r >= 0 for r in rep.ratios)
        ok = ok and reproducible and finite
        summary[kind] = {"max_ratio": rep.max_ratio, "mean_ratio": rep.mean_ratio,
                         "reproducible": reproducible, "finite": finite}
        for row in rep.rows():
            rows.append((kind, row["sample_id"], row["seed"], float(row["s"]), row["n"],
                         row["K_R"], float(row["ratio"])))
    return SuiteReport(name, seed, ("probe", "sample_id", "seed", "s", "n", "K_R", "ratio"),
                       rows, ok, summary)


def commutator_suite(seed: int = DEFAULT_SEED, samples: int = 100) -> SuiteReport:
    """Commutator and energy-pairing ratios on seeded solenoidal pairs; envelopes recorded."""
    return _probe_suite("commutator", ("commutator", "corollary"), seed, samples)


def kato_ponce_suite(seed: int = DEFAULT_SEED, samples: int = 100) -> SuiteReport:
    return _probe_suite("kato_ponce", ("kato_ponce",), seed, samples)


# ---------------------------------------------------------------- pointwise inequalities

def _unit(theta):
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def sample_gradient_estimate(rng: np.random.Generator, n: int):
    """(xi, zeta, s) with |zeta| < |xi|/2 and s in (1, 4]."""
    r = np.exp(rng.uniform(math.log(1e-3), math.log(1e3), n))
    xi = r[:, None] * _unit(rng.uniform(0, 2 * math.pi, n))
    rz = 0.5 * r * rng.uniform(0.0, 1.0, n)
    zeta = rz[:, None] * _unit(rng.uniform(0, 2 * math.pi, n))
    s = 4.0 - 3.0 * rng.uniform(0.0, 1.0, n)
    return xi, zeta, s


def gradient_estimate_suite(seed: int = DEFAULT_SEED, samples: int = 100_000) -> SuiteReport:
    rng = np.random.default_rng(seed)
    xi, zeta, s = sample_gradient_estimate(rng, samples)
    ratio = gradient_estimate_check(xi, zeta, s)
    bound = gradient_estimate_bound(s)
    holds = ratio <= bound
    rows = [(i, float(s[i]), float(xi[i, 0]), float(xi[i, 1]), float(zeta[i, 0]),
             float(zeta[i, 1]), float(ratio[i]), float(bound[i]), bool(holds[i]))
            for i in range(samples)]
    violations = int((~holds).sum())
    return SuiteReport("gradient_estimate", seed,
                       ("sample_id", "s", "xi1", "xi2", "zeta1", "zeta2", "ratio", "bound", "holds"),
                       rows, violations == 0,
                       {"violations": violations, "max_ratio_over_bound": float(np.max(ratio / bound))})


def sample_lemma_a1(rng: np.random.Generator, delta: float, n: int):
    """Pairs strictly inside the open sectors around pi/4 and 3 pi/4."""
    shrink = 1.0 - 1e-12
    tz = cx.CENTER_PHI + delta * shrink * rng.uniform(-1.0, 1.0, n)
    te = cx.CENTER_PSI + delta * shrink * rng.uniform(-1.0, 1.0, n)
    rz = np.exp(rng.uniform(-5, 5, n))
    re = np.exp(rng.uniform(-5, 5, n))
    return rz[:, None] * _unit(tz), re[:, None] * _unit(te)


def sample_lemma_a2(rng: np.random.Generator, delta: float, n: int):
    """xi in the sector Xi and zeta in Upsilon_xi."""
    r = np.exp(rng.uniform(-3, 8, n))
    xi = r[:, None] * _unit(cx.CENTER_PSI + 0.5 * delta * rng.uniform(-1.0, 1.0, n))
    rz = r * math.sin(delta / 2) * rng.uniform(0.0, 1.0, n)
    zeta = rz[:, None] * _unit(cx.CENTER_PHI + delta * rng.uniform(-1.0, 1.0, n))
    return xi, zeta


def lemmas_suite(seed: int = DEFAULT_SEED, samples: int = 100_000,
                 deltas=LEMMA_DELTAS, k_index: int = 1) -> SuiteReport:
    rng = np.random.default_rng(seed)
    rows, summary, ok = [], {}, True
    for delta in deltas:
        zeta, eta = sample_lemma_a1(rng, delta, samples)
        lhs, holds = cx.lemma_a1_check(zeta, eta, delta, k_index)
        rows.extend(("A1", delta, i, float(v), bool(h)) for i, (v, h) in enumerate(zip(lhs, holds)))
        xi, z2 = sample_lemma_a2(rng, delta, samples)
        ok2 = cx.lemma_a2_check(xi, z2, delta)
        args = np.arctan2((xi - z2)[:, 1], (xi - z2)[:, 0])
        rows.extend(("A2", delta, i, float(v), bool(h)) for i, (v, h) in enumerate(zip(args, ok2)))
        v1, v2 = int((~holds).sum()), int((~ok2).sum())
        summary[delta] = {"m_delta": cx.m_delta(delta), "min_a1": float(lhs.min()),
                          "a1_violations": v1, "a2_violations": v2}
        ok = ok and v1 == 0 and v2 == 0
    m01 = cx.m_delta(0.1)
    summary["m_delta(0.1)"] = m01
    ok = ok and abs(m01 - 0.32165) <= 1e-5
    return SuiteReport("lemmas", seed, ("lemma", "delta", "sample_id", "value", "holds"),
                       rows, ok, summary)


def mollifier_suite(seed: int = DEFAULT_SEED, samples: int = 1000) -> SuiteReport:
    """||S_K f - f||_Hs <= (K/L)^-m ||f||_H(s+m) on random (f, s, m, K, L)."""
    rng = np.random.default_rng(seed)
    grids = {}
    rows, violations, worst = [], 0, 0.0
    for i in range(samples):
        L = float(rng.choice([1.0, 2 * math.pi, 0.5]))
        K_R = int(rng.integers(4, 13))
        grid = grids.setdefault((L, K_R), SpectralGrid.for_cutoff(2, K_R, L))
        gamma = float(rng.uniform(0.5, 3.0))
        f = random_scalar(grid, rng, gamma)
        s = float(rng.uniform(0.0, 3.0))
        m = float(rng.uniform(0.0, 3.0))
        K = int(rng.integers(1, K_R + 1))
        lhs, rhs = cutoff_bound(f, K, s, m)
        holds = lhs <= rhs
        violations += not holds
        if rhs > 0:
            worst = max(worst, lhs / rhs)
        rows.append((i, L, K_R, gamma, s, m, K, lhs, rhs, bool(holds)))
    return SuiteReport("mollifier", seed,
                       ("sample_id", "L", "K_R", "gamma", "s", "m", "K", "lhs", "rhs", "holds"),
                       rows, violations == 0, {"violations": violations, "max_lhs_over_rhs": worst})


SUITES = {
    "commutator": commutator_suite,
    "kato_ponce": kato_ponce_suite,
    "gradient_estimate": gradient_estimate_suite,
    "lemmas": lemmas_suite,
    "mollifier": mollifier_suite,
}

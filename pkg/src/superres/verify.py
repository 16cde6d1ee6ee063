"""Invariant suites run by ``superres verify``.

Each suite returns a list of :class:`Check`; a suite passes when all its
checks pass.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .analysis import SensitivityConfig, phase_uncertainty
from .detection import binomial_sigma, coincidences, sample_clicks
from .experiments import DEFAULT_SEED, reference_space_config, space_channel_probabilities
from .fock import MAX_N, noon_reference_prob
from .optics import NoonModel, noon_detection_prob, sine_product, sine_product_closed_form


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    measured: float
    tolerance: float
    relation: str = "<"

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name} measured={self.measured:.6g} {self.relation} tol={self.tolerance:.6g}"


def identity_suite(n_max: int = 64, n_phases: int = 10_000, tol: float = 1e-9, time_limit_s: float = 1.0):
    t0 = time.perf_counter()
    phi = np.linspace(0.0, 2 * np.pi, n_phases)
    worst = 0.0
    for n in range(1, n_max + 1):
        dev = np.max(np.abs(sine_product(n, phi) - sine_product_closed_form(n, phi)))
        worst = max(worst, float(dev))
    elapsed = time.perf_counter() - t0
    return [
        Check(f"sine_product_identity n<={n_max}", worst < tol, worst, tol),
        Check("identity_runtime_s", elapsed < time_limit_s, elapsed, time_limit_s),
    ]


def noon_suite(n_phases: int = 100, tol: float = 1e-12, seed: int = DEFAULT_SEED):
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2 * np.pi, n_phases)
    out = []
    for n in range(1, MAX_N + 1):
        worst = 0.0
        for phi in phases:
            model = NoonModel(n, float(phi))
            for port in ("plus", "minus"):
                worst = max(worst, abs(noon_detection_prob(model, port) - noon_reference_prob(n, float(phi), port)))
        out.append(Check(f"noon_closed_form_vs_fock N={n}", worst < tol, worst, tol))
    return out


def factorization_suite(trials: int = 100, n_gates: int = 200_000, n_sigma: float = 5.0, seed: int = DEFAULT_SEED):
    """Coincidences of independently sampled per-gate click streams against the product of singles."""
    config = reference_space_config()
    phi1 = np.linspace(0.0, 90.0, 901)
    probs = space_channel_probabilities(config, phi1)
    p = probs[int(np.argmax(np.prod(probs, axis=1)))]
    worst = 0.0
    for t in range(trials):
        streams = [
            sample_clicks(float(p[k]), n_gates, np.random.SeedSequence(seed, spawn_key=(t, k)), channel_id=k)
            for k in range(p.size)
        ]
        coinc = coincidences(streams) / n_gates
        product = math.prod(s.frequency for s in streams)
        sigma = binomial_sigma(product, n_gates)
        worst = max(worst, abs(coinc - product) / sigma)
    return [Check(f"coincidence_vs_singles_product trials={trials} max_z", worst < n_sigma, worst, n_sigma)]


def sensitivity_suite(orders=(1, 6, 10), trials: int = 500, floor: float = 0.9, seed: int = DEFAULT_SEED):
    cfg = SensitivityConfig()
    out = []
    for n in orders:
        res = phase_uncertainty(cfg, n, trials=trials, seed=seed + n)
        out.append(Check(f"delta_phi_over_sql n={n}", res.ratio >= floor, res.ratio, floor, ">="))
    return out


SUITES = {
    "identity": identity_suite,
    "noon": noon_suite,
    "factorization": factorization_suite,
    "sensitivity": sensitivity_suite,
}


def run_suite(name: str) -> list[Check]:
    return SUITES[name]()

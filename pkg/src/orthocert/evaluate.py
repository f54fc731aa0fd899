"""Baselines and measurements around certification.

PGD adversarial accuracy on the posterior-mean network, empirical
probabilistic robustness by posterior sampling plus point-box verification,
grad-scale ablation sweeps, expansion-iteration statistics, and the
gradient-vs-verifier timing breakdown.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import mass as massmod
from .bounds import SAFE, VerifierConfig, verify_box
from .certify import CertifyParams, certify_gie
from .gradient import backward
from .network import (Certificate, NetworkDef, PosteriorParams,
                      RobustnessSpec, WeightBox, forward, sample_weights)

__all__ = [
    "AttackResult",
    "pgd_attack",
    "empirical_psafe",
    "ablate_rho",
    "iteration_stats",
    "timing_report",
    "build_report",
]


@dataclass(frozen=True)
class AttackResult:
    success: bool
    x_adv: Optional[np.ndarray]
    x_final: np.ndarray
    margins: tuple[float, ...]


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def _label_margin(logits: np.ndarray, label: int) -> float:
    if logits.size < 2:
        raise ValueError("attack needs at least two output classes")
    others = np.delete(logits, label)
    return float(logits[label] - others.max())


def pgd_attack(net: NetworkDef, w: np.ndarray, x: np.ndarray, label: int,
               epsilon: float, steps: int = 40, step_size: Optional[float] = None,
               clip: Optional[tuple[float, float]] = None) -> AttackResult:
    """l-inf PGD on the cross-entropy loss of the given deterministic weights.

    Every iterate is projected back onto the epsilon-ball around x and the
    clip domain, so the returned inputs always satisfy both constraints.
    """
    x = np.asarray(x, dtype=np.float64)
    if step_size is None:
        step_size = 2.5 * epsilon / steps if steps > 0 else 0.0
    lo = x - epsilon
    hi = x + epsilon
    if clip is not None:
        lo = np.maximum(lo, clip[0])
        hi = np.minimum(hi, clip[1])

    def project(v):
        return np.minimum(np.maximum(v, lo), hi)

    cur = project(x.copy())
    margins = []
    x_adv = None
    logits = forward(net, w, cur)
    margins.append(_label_margin(logits, label))
    if margins[-1] < 0:
        x_adv = cur.copy()
    for _ in range(steps):
        if x_adv is not None:
            break
        g_logits = _softmax(logits)
        g_logits[label] -= 1.0
        _, g_x = backward(net, w, cur, g_logits)
        cur = project(cur + step_size * np.sign(g_x))
        logits = forward(net, w, cur)
        margins.append(_label_margin(logits, label))
        if margins[-1] < 0:
            x_adv = cur.copy()
    return AttackResult(success=x_adv is not None, x_adv=x_adv,
                        x_final=cur, margins=tuple(margins))


def empirical_psafe(net: NetworkDef, posterior: PosteriorParams,
                    spec: RobustnessSpec, n_samples: int,
                    rng: np.random.Generator) -> float:
    """Fraction of posterior draws whose point box verifies on the input ball.

    Uses interval propagation on the degenerate weight box, so the estimate
    is itself conservative per draw; it still upper-bounds any certified
    p_safe on the same spec up to sampling error.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    cfg = VerifierConfig(mode="ibp")
    hits = 0
    for _ in range(n_samples):
        w = sample_weights(posterior, rng)
        if verify_box(net, WeightBox(w, w), spec, cfg) == SAFE:
            hits += 1
    return hits / n_samples


def ablate_rho(net: NetworkDef, posterior: PosteriorParams,
               specs: Sequence[RobustnessSpec], rho_grid: Sequence[float],
               params: CertifyParams, verifier_mode: str = "ibp") -> list[dict]:
    """Mean certified mass of the gradient-guided method per grid value.

    The grid must contain 0, which reproduces the uniform-expansion result
    and anchors the sweep.  Seeds and budgets are identical across the grid.
    """
    rho_grid = list(rho_grid)
    if not rho_grid:
        raise ValueError("rho grid must be non-empty")
    if not any(r == 0 for r in rho_grid):
        raise ValueError("rho grid must include 0")
    if not specs:
        raise ValueError("ablate_rho needs at least one spec")
    rows = []
    for rho in rho_grid:
        p = replace(params, grad_scale=float(rho))
        values = [certify_gie(net, posterior, spec, p, VerifierConfig(mode=verifier_mode)).p_safe
                  for spec in specs]
        rows.append({"rho": rho, "mean_psafe": float(np.mean(values)),
                     "psafe": values})
    return rows


def iteration_stats(certificates: Sequence[Certificate],
                    posterior: Optional[PosteriorParams] = None,
                    ie_cap: int = massmod.DEFAULT_IE_CAP) -> dict:
    """Histogram of per-draw expansion counts, plus the saturation iteration.

    The saturation iteration is the smallest cap J such that truncating every
    kept box at J expansion steps already yields the certificate's final
    mass; it needs the posterior to recompute truncated unions.
    """
    hist: dict[int, int] = {}
    total_draws = 0
    for cert in certificates:
        for j in cert.iterations:
            hist[j] = hist.get(j, 0) + 1
            total_draws += 1
    out = {"histogram": dict(sorted(hist.items())), "total_draws": total_draws}
    if posterior is not None:
        saturation = []
        for cert in certificates:
            if not cert.draws:
                saturation.append(0)
                continue
            max_j = max(d.j for d in cert.draws)
            sat = max_j
            try:
                for cap_j in range(1, max_j + 1):
                    boxes = [d.box_at(cap_j) for d in cert.draws]
                    value = massmod.union_mass_exact(posterior, boxes, cap=ie_cap).value
                    if value >= cert.p_safe - 1e-12:
                        sat = cap_j
                        break
            except massmod.UnionSizeError:
                pass
            saturation.append(sat)
        out["saturation"] = saturation
    return out


def timing_report(certs_by_method: dict[str, Certificate]) -> dict:
    """Wall-clock breakdown per method and the gradient overhead ratio."""
    report: dict = {}
    for method, cert in certs_by_method.items():
        t = cert.timings
        other = max(t["total"] - t["gradient"] - t["verify"], 0.0)
        report[method] = {
            "gradient_time": t["gradient"],
            "verify_time": t["verify"],
            "other_time": other,
            "total": t["gradient"] + t["verify"] + other,
        }
    if "pie" in report and "gie" in report and report["pie"]["total"] > 0:
        delta = report["gie"]["total"] - report["pie"]["total"]
        report["gie_over_pie_pct"] = 100.0 * delta / report["pie"]["total"]
    return report


def build_report(records: Sequence[dict], metadata: Optional[dict] = None) -> dict:
    """Aggregate per-input records; every aggregate is recomputable from them."""
    records = list(records)
    aggregates: dict = {"count": len(records)}
    if records:
        numeric_keys = [k for k, v in records[0].items()
                        if isinstance(v, (int, float)) and not isinstance(v, bool)]
        for key in numeric_keys:
            aggregates[f"mean_{key}"] = float(np.mean([r[key] for r in records]))
        bool_keys = [k for k, v in records[0].items() if isinstance(v, bool)]
        for key in bool_keys:
            aggregates[f"rate_{key}"] = float(np.mean([1.0 if r[key] else 0.0 for r in records]))
    return {"records": records, "aggregates": aggregates,
            "metadata": dict(metadata or {})}

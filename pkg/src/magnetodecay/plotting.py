"""PNG figures for the CLI reports (Agg backend, no display)."""
from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

MODE_COLORS = {"T": "tab:blue", "L": "tab:red"}


def _save(fig, path, prov: Optional[dict]) -> Path:
    path = Path(path)
    meta = {"Software": "magnetodecay"}
    if prov:
        meta["Comment"] = " ".join(f"{k}={v}" for k, v in sorted(prov.items()))
    fig.savefig(path, dpi=110, metadata=meta)
    plt.close(fig)
    return path


def _segment_points(seg) -> np.ndarray:
    if seg.path is not None:
        return np.asarray(seg.path)
    return np.stack([seg.start.y, seg.end.y])


def plot_ray(ray, path, prov: Optional[dict] = None, title: str = "") -> Path:
    fig = plt.figure(figsize=(6, 6))
    ax = fig.add_subplot(projection="3d")
    for seg in ray.segments:
        p = _segment_points(seg)
        style = "-" if seg.segment_type == "interior-line" else ":"
        ax.plot(p[:, 0], p[:, 1], p[:, 2], style, color=MODE_COLORS.get(seg.mode, "k"), lw=1.2)
    if ray.events:
        y = np.array([e.point.y for e in ray.events])
        ax.scatter(y[:, 0], y[:, 1], y[:, 2], s=10, color="k")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_zlabel("z")
    ax.set_title(title or f"ray, life length {ray.life_length:.4g}")
    return _save(fig, path, prov)


def plot_shadow_curves(curves: Sequence, B_hat, path, prov: Optional[dict] = None, title: str = "") -> Path:
    fig = plt.figure(figsize=(6, 6))
    ax = fig.add_subplot(projection="3d")
    for i, c in enumerate(curves):
        p = np.vstack([c.points, c.points[:1]])
        ax.plot(p[:, 0], p[:, 1], p[:, 2], lw=1.5, label=f"curve {i}: order {c.contact_order}")
    b = np.asarray(B_hat, dtype=float)
    ax.quiver(0, 0, 0, *b, color="k", length=1.0)
    ax.set_title(title or "shadow curves")
    if curves:
        ax.legend(loc="upper left", fontsize=8)
    return _save(fig, path, prov)


def plot_energy(t, E, path, fit=None, dissipation=None, prov: Optional[dict] = None, title: str = "") -> Path:
    t = np.asarray(t, dtype=float)
    E = np.asarray(E, dtype=float)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    ax = axes[0]
    ax.semilogy(t, E, color="k", lw=1.2, label="E")
    if fit is not None:
        lo, hi = fit.window
        tw = t[(t >= lo) & (t <= hi)]
        ax.semilogy(tw, fit.exponential.predict(tw), "--", label=f"exp, a={fit.exponential.rate:.3g}")
        ax.semilogy(tw, fit.polynomial.predict(tw), ":", label=f"poly, p={fit.polynomial.rate:.3g}")
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    ax.legend(fontsize=8)
    ax = axes[1]
    if E[0] > 0:
        ax.plot(t, E * (t + 1.0) / E[0], color="tab:green", label="E (t+1) / E(0)")
    if dissipation is not None:
        ax.plot(t, np.asarray(dissipation) / max(E[0], np.finfo(float).tiny), color="tab:purple",
                label="dissipation rate / E(0)")
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path, prov)

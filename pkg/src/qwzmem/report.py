"""Figure rendering for the CLI pipelines.

Every renderer writes a single PNG next to the delimited output it
illustrates.  Figures are deliberately plain (fixed size, fixed dpi,
fixed metadata) so that reruns of the same configuration reproduce the
same bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_SAVE_KWARGS = dict(dpi=110, metadata={"Software": "qwzmem"})


def _finish(fig, path: str) -> None:
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def render_phase_diagram(rows, path: str) -> None:
    """Chern numbers from both routes, plus the Hall conductance."""
    ms = [r["m"] for r in rows]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(ms, [r["c_patchwise"] for r in rows], "o-", label="C (patchwise)")
    ax.plot(ms, [r["c_fhs"] for r in rows], "s--", label="C (plaquette)")
    ax.plot(ms, [r["sigma_xy"] for r in rows], "^:", label=r"$\sigma_{xy}$ [$e^2/h$]")
    for mc in (-2.0, 0.0, 2.0):
        ax.axvline(mc, color="0.8", lw=0.8)
    ax.set_xlabel("mass m")
    ax.set_ylabel("invariant")
    ax.legend()
    ax.set_title("Chern phase diagram")
    _finish(fig, path)


def render_vorticity(series, path: str) -> None:
    """Index staircase with the raw winding and orientation signal."""
    fig, (ax1, ax2) = plt.subplots(
        2, 1, figsize=(7.0, 4.5), sharex=True, height_ratios=[2, 1]
    )
    ax1.step(series.times, series.indices, where="post", label="index")
    ax1.plot(
        series.times, series.raw_windings, lw=0.8, alpha=0.6, label="raw winding"
    )
    ax1.set_ylabel("vortex index")
    ax1.set_ylim(-1.6, 1.6)
    ax1.legend(loc="upper right")
    ax2.plot(series.times, series.orientation, lw=0.8)
    ax2.axhline(0.0, color="0.8", lw=0.8)
    ax2.set_ylabel("orientation")
    ax2.set_xlabel("time")
    ax1.set_title(
        f"vortex index at node {series.probe}, loop radius {series.radius}"
    )
    _finish(fig, path)


def render_loschmidt(loschmidt, path: str) -> None:
    fig, ax = plt.subplots(figsize=(7.0, 3.5))
    ax.plot(loschmidt.times, np.real(loschmidt.values), label="Re L")
    ax.plot(loschmidt.times, np.imag(loschmidt.values), label="Im L")
    ax.plot(
        loschmidt.times, np.abs(loschmidt.values), color="k", lw=0.8, label="|L|"
    )
    ax.axhline(0.0, color="0.8", lw=0.8)
    ax.set_xlabel("time")
    ax.set_ylabel("Loschmidt amplitude")
    ax.legend(loc="upper right")
    ax.set_title(f"Loschmidt amplitude at node {loschmidt.probe}")
    _finish(fig, path)


def render_period_scan(rows, path: str) -> None:
    """Measured flip periods against the 2pi/gap law."""
    ok = [r for r in rows if np.isfinite(r.period)]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    if ok:
        ax.plot(
            [r.m_quench for r in ok], [r.period for r in ok], "o", label="measured"
        )
        ax.plot(
            [r.m_quench for r in ok],
            [r.period_theory for r in ok],
            "-",
            label=r"$2\pi/\Delta E$",
        )
    ax.set_xlabel("post-quench mass m'")
    ax.set_ylabel("period")
    ax.legend()
    ax.set_title("vortex oscillation period vs quench mass")
    _finish(fig, path)


def render_coincidence(loschmidt, report, path: str) -> None:
    """Loschmidt components with the flip times overlaid."""
    fig, ax = plt.subplots(figsize=(7.0, 3.5))
    ax.plot(loschmidt.times, np.real(loschmidt.values), label="Re L")
    ax.plot(loschmidt.times, np.imag(loschmidt.values), label="Im L")
    ax.axhline(0.0, color="0.8", lw=0.8)
    for i, t in enumerate(report.flips):
        ax.axvline(
            t, color="r", lw=0.7, alpha=0.7, label="flip" if i == 0 else None
        )
    ax.set_xlabel("time")
    ax.set_ylabel("amplitude")
    ax.legend(loc="upper right")
    ax.set_title(
        f"vorticity flips vs Loschmidt sign changes "
        f"(max offset {report.max_offset:.4f})"
    )
    _finish(fig, path)


def render_field(grid, conn, density, path: str, t: float, stride: int = 4) -> None:
    """Connection quiver over the first-component density."""
    fig, ax = plt.subplots(figsize=(5.5, 5.0))
    im = ax.pcolormesh(
        grid.kx, grid.ky, density, shading="nearest", cmap="viridis"
    )
    fig.colorbar(im, ax=ax, label=r"$|c_1|^2$")
    sl = (slice(None, None, stride), slice(None, None, stride))
    with np.errstate(invalid="ignore"):
        ax.quiver(
            grid.kx[sl],
            grid.ky[sl],
            conn.ax[sl],
            conn.ay[sl],
            color="w",
            width=0.003,
            scale_units="xy",
        )
    ax.set_xlabel(r"$k_x$")
    ax.set_ylabel(r"$k_y$")
    ax.set_title(f"connection field at t = {t:g}")
    _finish(fig, path)

"""Probe comparison tables against the layered-column solution, and figures."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from sphsoil.scenarios import ScenarioConfig, analytic_vertical_stress

REPORT_COLUMNS = ("label", "x", "y", "depth", "field", "final", "target", "rel_error")
# probe field -> index into analytic_vertical_stress's (eff, pw, total)
_ORACLE_FIELDS = {"syy_eff": 0, "pw": 1, "syy": 2}


def probe_report(series, cfg: ScenarioConfig | None = None, oracle="analytic"):
    """Final probe values with analytic targets and relative errors.

    With ``oracle="none"`` (or no scenario) targets and errors are left
    blank (``None``). Targets come from the 1D layered column below the
    ground surface at the probe abscissa.
    """
    if oracle not in ("analytic", "none"):
        raise ValueError(f"oracle must be 'analytic' or 'none', got {oracle!r}")
    rows = []
    for s in series:
        x, y = s.position
        depth = target_set = None
        if oracle == "analytic" and cfg is not None:
            surface = float(np.asarray(cfg.surface_level(np.array([x])), dtype=float).ravel()[0])
            depth = surface - y
            target_set = [float(v[0]) for v in analytic_vertical_stress(np.array([y]), surface, cfg.water_level,
                                                                       cfg.material)]
        for name in _ORACLE_FIELDS:
            final = s.final(name)
            target = err = None
            if target_set is not None:
                target = target_set[_ORACLE_FIELDS[name]]
                if target != 0 and math.isfinite(final):
                    err = (final - target) / abs(target)
            rows.append({
                "label": s.label, "x": x, "y": y, "depth": depth, "field": name,
                "final": final if math.isfinite(final) else None, "target": target, "rel_error": err,
            })
    return rows


def write_report(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "x[m]", "y[m]", "depth[m]", "field", "final[Pa]", "target[Pa]", "rel_error[-]"])
        for r in rows:
            w.writerow(["" if r[k] is None else (repr(float(r[k])) if isinstance(r[k], float) else r[k])
                        for k in REPORT_COLUMNS])


def format_report(rows):
    """Plain-text table for the terminal."""
    lines = [f"{'probe':<6}{'field':<9}{'depth[m]':>9}{'final[kPa]':>12}{'target[kPa]':>13}{'error':>11}"]
    for r in rows:
        depth = "" if r["depth"] is None else f"{r['depth']:.2f}"
        final = "" if r["final"] is None else f"{r['final'] / 1e3:.3f}"
        target = "" if r["target"] is None else f"{r['target'] / 1e3:.3f}"
        err = "" if r["rel_error"] is None else f"{100 * r['rel_error']:+.2f}%"
        lines.append(f"{r['label']:<6}{r['field']:<9}{depth:>9}{final:>12}{target:>13}{err:>11}")
    return "\n".join(lines)


def render_figures(out, series, energy, sim=None, rows=None):
    """Probe histories, kinetic energy and the final stress field as PNG files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out)
    written = []
    targets = {}
    for r in rows or []:
        if r["field"] == "syy_eff" and r["target"] is not None:
            targets[r["label"]] = r["target"]

    if series:
        fig, ax = plt.subplots(figsize=(7, 4))
        for s in series:
            (line,) = ax.plot(s.array("t"), s.array("syy_eff") / 1e3, label=f"{s.label}")
            if s.label in targets:
                ax.axhline(targets[s.label] / 1e3, color=line.get_color(), ls="--", lw=0.8)
        ax.set_xlabel("time [s]")
        ax.set_ylabel("effective vertical stress [kPa]")
        ax.legend(title="probe (dashed: analytic)")
        ax.grid(alpha=0.3)
        fig.tight_layout()
        fig.savefig(out / "probes_syy_eff.png", dpi=120)
        plt.close(fig)
        written.append("probes_syy_eff.png")

    if energy:
        e = np.asarray(energy, dtype=float)
        fig, ax = plt.subplots(figsize=(7, 3.5))
        ax.semilogy(e[:, 0], np.maximum(e[:, 1], 1e-30))
        ax.set_xlabel("time [s]")
        ax.set_ylabel("kinetic energy [J/m]")
        ax.grid(alpha=0.3, which="both")
        fig.tight_layout()
        fig.savefig(out / "kinetic_energy.png", dpi=120)
        plt.close(fig)
        written.append("kinetic_energy.png")

    if sim is not None:
        n = sim.n_soil
        p = sim.particles
        fig, ax = plt.subplots(figsize=(9, 4))
        sc = ax.scatter(p.x[:n, 0], p.x[:n, 1], c=(p.sigma[:n, 1, 1] + p.pw[:n]) / 1e3, s=2, cmap="viridis")
        fig.colorbar(sc, ax=ax, label="total vertical stress [kPa]")
        ax.set_aspect("equal")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        fig.tight_layout()
        fig.savefig(out / "stress_field.png", dpi=120)
        plt.close(fig)
        written.append("stress_field.png")
    return written

"""Scenario configuration, orchestration and artifact emission.

Every command reads a JSON scenario config, validates it, runs one study
and writes artifacts under the output directory together with a manifest
embedding the resolved configuration and a content hash per artifact.
Reruns with the same config are byte-identical (timestamps live in a
separate manifest field, outside the hashed content).

Exit codes: 0 success, 2 configuration validation error (message points
at the offending field), 3 numerical certification failure (bundle-like
test, quadrature refinement, characteristic escape, ...).
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import click
import numpy as np

from . import geometry as geo
from .dirac import assemble_dirac, spectrum_csv
from .egorov import BandSpec, decay_study, decay_verdict, reports_to_csv
from .errors import ConfigError, FolixError
from .flows import (ReducedProfile, initial_conditions_from_csv, reduced_flow,
                    restricted_flow, trajectory_to_csv)
from .quantize import FrequencyCutoff, KernelSymbol, TransverseCutoff
from .symbols import (HomogeneousSymbol, save_symbol, smooth_bump, transport,
                      export_scalar_slice)

DEFAULTS = {
    "grid": {"n_u": 32, "n_v": 32, "n_tau": 32, "t_max": 1.0},
    "flow": {"dt": 1e-3, "t_end": 1.0, "reduced_initial": [0.0, 1.0],
             "transport_dt": 2e-3},
    "quantization": {"eta_max": None, "n_eta": None, "R": 0.4,
                     "eta0": 2.0 * np.pi},
    "symbol": {"preset": "cosine_v", "degree": 0, "amplitude": 1.0,
               "harmonic": 1, "tau_radius": 0.45},
    "bands": [[4, 8], [8, 16]],
    "egorov": {"decay_threshold": 0.6, "guard": 8},
    "tolerances": {"bundle_like": 1e-10},
    "seed": 0,
}


def _merge(defaults, given):
    out = {}
    for key, val in defaults.items():
        if isinstance(val, dict):
            out[key] = _merge(val, given.get(key, {}) if isinstance(given, dict) else {})
        else:
            out[key] = given.get(key, val) if isinstance(given, dict) else val
    if isinstance(given, dict):
        for key in given:
            if key not in out:
                out[key] = given[key]
    return out


def load_config(path):
    try:
        with open(path) as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}", field="<file>") from exc
    cfg = _merge(DEFAULTS, raw)
    if "metric" not in raw:
        raise ConfigError("missing metric specification", field="metric")
    cfg["metric"] = raw["metric"]
    _validate(cfg)
    return cfg


def _validate(cfg):
    g = cfg["grid"]
    for key in ("n_u", "n_v", "n_tau"):
        if not (isinstance(g[key], int) and g[key] > 0):
            raise ConfigError(f"grid.{key} must be a positive integer", field=f"grid.{key}")
    if g["n_tau"] % 2:
        raise ConfigError("grid.n_tau must be even", field="grid.n_tau")
    if g["t_max"] <= 0:
        raise ConfigError("grid.t_max must be positive", field="grid.t_max")
    q = cfg["quantization"]
    if not (0.0 < q["R"] < 0.5):
        raise ConfigError("quantization.R must satisfy 0 < R < 1/2", field="quantization.R")
    if cfg["flow"]["dt"] <= 0 or cfg["flow"]["t_end"] < 0:
        raise ConfigError("flow.dt must be positive and flow.t_end nonnegative",
                          field="flow.dt")
    for band in cfg["bands"]:
        if len(band) != 2 or band[0] < 1 or band[1] < band[0]:
            raise ConfigError(f"invalid band {band}", field="bands")
    try:
        metric = geo.metric_from_json(cfg["metric"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad metric spec: {exc}", field="metric") from exc
    return metric


def _metric(cfg):
    return geo.metric_from_json(cfg["metric"])


def _tau_budget(cfg, geom):
    """Worst-case leafwise drift of transport characteristics must stay in the buffer."""
    g, fl = cfg["grid"], cfg["flow"]
    uu, vv = geom.mesh(64, 64)
    cu = np.abs(geom.flow_coefficients(uu, vv)[0])
    drift = 2.0 * float(np.max(cu)) * fl["t_end"]
    budget = 0.1 * g["t_max"]
    if drift > budget:
        raise ConfigError(
            f"flow.t_end drift bound {drift:.3f} exceeds the tau buffer "
            f"{budget:.3f}; shorten t_end or widen grid.t_max", field="flow.t_end")


def _build_symbol(cfg):
    g = cfg["grid"]
    s = cfg["symbol"]
    amp = float(s["amplitude"])
    harm = int(s["harmonic"])
    rad = float(s["tau_radius"])
    preset = s["preset"]
    if preset == "cosine_v":
        fn = lambda u, v, sg, t: amp * np.cos(2 * np.pi * harm * v) * smooth_bump(t, rad)
    elif preset == "sine_v":
        fn = lambda u, v, sg, t: amp * np.sin(2 * np.pi * harm * v) * smooth_bump(t, rad)
    elif preset == "constant":
        fn = lambda u, v, sg, t: amp * smooth_bump(t, rad)
    else:
        raise ConfigError(f"unknown symbol preset {preset!r}", field="symbol.preset")
    theta = float(_metric(cfg).theta)
    sym_nu = min(g["n_u"], 16)
    sym_nv = min(g["n_v"], 16)
    return HomogeneousSymbol.from_function(fn, sym_nu, sym_nv, g["n_tau"],
                                           g["t_max"], theta, degree=int(s["degree"]))


def _kernel_symbol(cfg):
    q = cfg["quantization"]
    return KernelSymbol(_build_symbol(cfg),
                        transverse_cutoff=TransverseCutoff(R=q["R"]),
                        frequency_cutoff=FrequencyCutoff(eta0=q["eta0"]))


# -- artifact bookkeeping ----------------------------------------------------


class Emitter:
    def __init__(self, out_dir, command, cfg):
        self.out_dir = out_dir
        self.command = command
        self.cfg = cfg
        self.artifacts = []
        os.makedirs(out_dir, exist_ok=True)

    def write_text(self, name, text):
        path = os.path.join(self.out_dir, name)
        data = text.encode()
        with open(path, "wb") as f:
            f.write(data)
        self.artifacts.append({"path": name, "sha256": hashlib.sha256(data).hexdigest()})
        return path

    def write_bytes(self, name, data):
        path = os.path.join(self.out_dir, name)
        with open(path, "wb") as f:
            f.write(data)
        self.artifacts.append({"path": name, "sha256": hashlib.sha256(data).hexdigest()})
        return path

    def finish(self):
        manifest = {
            "command": self.command,
            "config": self.cfg,
            "artifacts": self.artifacts,
        }
        content = json.dumps(manifest, indent=2, sort_keys=True, default=float)
        manifest["timestamps"] = {"written_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}
        manifest["content_sha256"] = hashlib.sha256(content.encode()).hexdigest()
        path = os.path.join(self.out_dir, "manifest.json")
        with open(path, "w") as f:
            json.dump(manifest, f, indent=2, sort_keys=True, default=float)
        return path


def _threads():
    try:
        return max(1, int(os.environ.get("FOLIX_THREADS", "1")))
    except ValueError:
        return 1


# -- commands -----------------------------------------------------------------


@click.group()
def main():
    """Transverse dynamics on the foliated 2-torus."""


def _run(fn, config, out, **kw):
    try:
        cfg = load_config(config)
        if out is None:
            out = cfg.get("out_dir", "folix-out")
        fn(cfg, out, **kw)
    except ConfigError as exc:
        field = f" (field: {exc.field})" if exc.field else ""
        click.echo(f"config error: {exc}{field}", err=True)
        sys.exit(2)
    except FolixError as exc:
        click.echo(f"certification failure: {type(exc).__name__}: {exc}", err=True)
        sys.exit(3)


@main.command("geometry-check")
@click.argument("config", type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None)
def geometry_check(config, out):
    """Bundle-like test and derived-field ranges for the configured metric."""
    def body(cfg, out_dir):
        metric = _metric(cfg)
        g = cfg["grid"]
        report = geo.geometry_report(metric, grid=(g["n_u"], g["n_v"]),
                                     tol=cfg["tolerances"]["bundle_like"])
        em = Emitter(out_dir, "geometry-check", cfg)
        em.write_text("geometry_report.json",
                      json.dumps(report, indent=2, sort_keys=True) + "\n")
        geom = geo.build_geometry(metric, (g["n_u"], g["n_v"]))
        lines = ["u,v,F"]
        for i in range(g["n_u"]):
            for j in range(g["n_v"]):
                lines.append(f"{i / g['n_u']:.17g},{j / g['n_v']:.17g},{geom.F[i, j]:.17g}")
        em.write_text("mean_curvature_field.csv", "\n".join(lines) + "\n")
        em.finish()
        click.echo(json.dumps(report, sort_keys=True))
    _run(body, config, out)


@main.command("flow")
@click.argument("config", type=click.Path(exists=True))
@click.option("--points", type=click.Path(exists=True), required=True,
              help="CSV of initial conditions (t,u,v,p_v,hamiltonian at t=0)")
@click.option("--t", "t_end", type=float, default=None)
@click.option("--out", type=click.Path(), default=None)
def flow_cmd(config, points, t_end, out):
    """Restricted geodesic trajectories from a CSV of initial covectors."""
    def body(cfg, out_dir):
        metric = _metric(cfg)
        g, fl = cfg["grid"], cfg["flow"]
        t = fl["t_end"] if t_end is None else t_end
        geom = geo.build_geometry(metric, (g["n_u"], g["n_v"]))
        cert = geo.is_bundle_like(metric, cfg["tolerances"]["bundle_like"],
                                  grid=(g["n_u"], g["n_v"]))
        with open(points) as f:
            states = initial_conditions_from_csv(f.read())
        em = Emitter(out_dir, "flow", cfg)

        def job(state):
            return restricted_flow(geom, state, t, fl["dt"], certificate=cert)

        n_threads = _threads()
        if n_threads > 1:
            with ThreadPoolExecutor(max_workers=n_threads) as pool:
                trajs = list(pool.map(job, states))
        else:
            trajs = [job(st) for st in states]
        for i, traj in enumerate(trajs):
            em.write_text(f"trajectory_{i:03d}.csv", trajectory_to_csv(traj, "restricted"))
        em.finish()
        click.echo(f"integrated {len(trajs)} trajectories to t = {t}")
    _run(body, config, out)


@main.command("reduced-flow")
@click.argument("config", type=click.Path(exists=True))
@click.option("--t", "t_end", type=float, default=None)
@click.option("--out", type=click.Path(), default=None)
def reduced_flow_cmd(config, t_end, out):
    """Reduced trajectory on the transverse circle (rational slope)."""
    def body(cfg, out_dir):
        metric = _metric(cfg)
        g, fl = cfg["grid"], cfg["flow"]
        t = fl["t_end"] if t_end is None else t_end
        geom = geo.build_geometry(metric, (g["n_u"], g["n_v"]))
        profile = ReducedProfile.from_geometry(geom)
        y0, eta0 = fl["reduced_initial"]
        traj = reduced_flow(profile, (y0, eta0), t, fl["dt"], return_trajectory=True)
        em = Emitter(out_dir, "reduced-flow", cfg)
        em.write_text("reduced_trajectory.csv", trajectory_to_csv(traj, "reduced"))
        em.finish()
        click.echo(f"reduced flow to t = {t}: final {tuple(traj.final)}")
    _run(body, config, out)


@main.command("spectrum")
@click.argument("config", type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None)
def spectrum_cmd(config, out):
    """Eigenvalues of the transverse Dirac operator and its positive square root."""
    def body(cfg, out_dir):
        metric = _metric(cfg)
        g = cfg["grid"]
        geom = geo.build_geometry(metric, (g["n_u"], g["n_v"]))
        D = assemble_dirac(geom, (g["n_u"], g["n_v"]))
        em = Emitter(out_dir, "spectrum", cfg)
        em.write_text("spectrum.csv", spectrum_csv(D))
        em.finish()
        lam = D.abs_spectrum()
        click.echo(f"assembled {D.modes.dim} x {D.modes.dim}; "
                   f"<D> spectrum in [{lam[0]:.6f}, {lam[-1]:.6f}]")
    _run(body, config, out)


@main.command("transport")
@click.argument("config", type=click.Path(exists=True))
@click.option("--t", "t_end", type=float, default=None)
@click.option("--out", type=click.Path(), default=None)
def transport_cmd(config, t_end, out):
    """Evolve the configured symbol along the lifted geodesic flow."""
    def body(cfg, out_dir):
        metric = _metric(cfg)
        g, fl = cfg["grid"], cfg["flow"]
        t = fl["t_end"] if t_end is None else t_end
        cfg["flow"]["t_end"] = t
        geom = geo.build_geometry(metric, (g["n_u"], g["n_v"]))
        _tau_budget(cfg, geom)
        cert = geo.is_bundle_like(metric, cfg["tolerances"]["bundle_like"],
                                  grid=(g["n_u"], g["n_v"]))
        k0 = _build_symbol(cfg)
        kt = transport(k0, geom, t, dt=fl["transport_dt"], certificate=cert)
        em = Emitter(out_dir, "transport", cfg)
        from .symbols import symbol_to_bytes, symbol_sidecar
        em.write_bytes("symbol_t.bin", symbol_to_bytes(kt))
        em.write_text("symbol_t.bin.json",
                      json.dumps(symbol_sidecar(kt), indent=2, sort_keys=True) + "\n")
        em.write_text("symbol_t_slice.csv", export_scalar_slice(kt))
        em.finish()
        click.echo(f"transported symbol to t = {t}")
    _run(body, config, out)


@main.command("egorov")
@click.argument("config", type=click.Path(exists=True))
@click.option("--t", "t_end", type=float, default=None)
@click.option("--bands", "bands_opt", type=str, default=None,
              help="colon/comma list, e.g. 4:8,8:16,16:32")
@click.option("--out", type=click.Path(), default=None)
def egorov_cmd(config, t_end, bands_opt, out):
    """Band-residual comparison of quantum evolution vs symbol transport."""
    def body(cfg, out_dir):
        metric = _metric(cfg)
        g, fl = cfg["grid"], cfg["flow"]
        t = fl["t_end"] if t_end is None else t_end
        cfg["flow"]["t_end"] = t
        if bands_opt:
            cfg["bands"] = [[int(a), int(b)] for a, b in
                            (p.split(":") for p in bands_opt.split(","))]
        bands = [BandSpec(a, b) for a, b in cfg["bands"]]
        guard = int(cfg["egorov"]["guard"])
        n_v_eff = max(g["n_v"], 2 * (max(b.n_hi for b in bands) + guard))
        geom = geo.build_geometry(metric, (g["n_u"], n_v_eff))
        _tau_budget(cfg, geom)
        cert = geo.is_bundle_like(metric, cfg["tolerances"]["bundle_like"],
                                  grid=(g["n_u"], g["n_v"]))
        D = assemble_dirac(geom, (g["n_u"], n_v_eff))
        ks = _kernel_symbol(cfg)
        q = cfg["quantization"]
        reports = decay_study(ks, geom, D, t, bands,
                              transport_dt=fl["transport_dt"], certificate=cert,
                              eta_max=q["eta_max"], n_eta=q["n_eta"])
        em = Emitter(out_dir, "egorov", cfg)
        em.write_text("egorov_residuals.csv", reports_to_csv(reports))
        thr = cfg["egorov"]["decay_threshold"]
        criteria = []
        for rep in reports:
            if rep.decay_ratio is not None:
                criteria.append({"kind": "decay", "band": [rep.band.n_lo, rep.band.n_hi],
                                 "ratio": rep.decay_ratio, "threshold": thr,
                                 "pass": bool(rep.decay_ratio <= thr)})
        verdict = {"pass": bool(all(c["pass"] for c in criteria)) if criteria else True,
                   "criteria": criteria}
        em.write_text("egorov_verdict.json",
                      json.dumps(verdict, indent=2, sort_keys=True, default=float) + "\n")
        em.finish()
        click.echo(json.dumps(verdict, sort_keys=True, default=float))
    _run(body, config, out)


@main.command("plotdata")
@click.argument("artifact", type=click.Path(exists=True))
@click.option("--kind", type=click.Choice(["trajectory", "field-slice", "residual-curve"]),
              required=True)
@click.option("--out", type=click.Path(), default=None)
def plotdata_cmd(artifact, kind, out):
    """Convert an artifact to whitespace-separated plot columns."""
    try:
        text = emit_plotdata(artifact, kind)
    except FolixError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    if out:
        with open(out, "w") as f:
            f.write(text)
        click.echo(f"wrote {out}")
    else:
        click.echo(text, nl=False)


def emit_plotdata(artifact, kind):
    """Columnar plot data with a header comment naming the columns."""
    from .errors import UnknownArtifact
    with open(artifact) as f:
        text = f.read()
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    if kind == "trajectory":
        if header[:4] != ["t", "u", "v", "p_v"]:
            raise UnknownArtifact(f"{artifact} is not a trajectory CSV")
        out = ["# t u v p_v h"]
        out += [" ".join(r) for r in rows]
    elif kind == "field-slice":
        if header != ["u", "v", "F"]:
            raise UnknownArtifact(f"{artifact} is not a field CSV")
        out = ["# u v F"]
        out += [" ".join(r) for r in rows]
    elif kind == "residual-curve":
        if "relative" not in header:
            raise UnknownArtifact(f"{artifact} is not a residual CSV")
        i_lo = header.index("n_lo")
        i_hi = header.index("n_hi")
        i_rel = header.index("relative")
        out = ["# band_center relative_residual"]
        for r in rows:
            center = 0.5 * (float(r[i_lo]) + float(r[i_hi]))
            out.append(f"{center:.17g} {r[i_rel]}")
    else:
        raise UnknownArtifact(kind)
    return "\n".join(out) + "\n"


if __name__ == "__main__":
    main()

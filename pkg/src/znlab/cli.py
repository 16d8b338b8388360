"""Configuration-driven experiment runner with reproducible outputs.

Each experiment kind wires a JSON config into the exact checks and scans of
the library, writes a JSON report (library version, fully resolved config,
computed quantities, pass/fail per tolerance) plus CSV tables where a scan
produces rows, and exits 0 exactly when every asserted identity passed.
Cell references in configs use coordinate tuples, never internal indices.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from . import fieldmath as fm
from .cells import FieldChain, build_torus, dualize, suspend
from .defects import (
    closed_defect_sum,
    defect_amplitudes,
    polymer_gas,
    reconstruct_from_sectors,
    sector_amplitudes_exact,
)
from .duality import kw_identity_check, kw_trotter_check
from .gauge import (
    critical_constants,
    joint_marginals_check,
    scan_csv,
    transition_scan,
)
from .lowactivity import (
    activity_bounds,
    census_csv,
    counting_constant,
    tail_and_systole,
)
from .quantum import InsertionData, decorated_trace
from .spacetime import (
    LocalWeights,
    TrotterParams,
    background_charge,
    flat_cocycle_count,
    lift_background,
    partition_exact,
    partition_sliced,
    trotter_weights,
    vacuum_normalization,
    zero_background,
)

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "run", "main"]

KINDS = (
    "oracle-vs-classical",
    "defect-identities",
    "low-activity-report",
    "kw-duality",
    "gauge-prcm-marginals",
    "sw-scan",
)

THREADS_ENV = "ZNLAB_THREADS"


class ConfigError(ValueError):
    """Config parse or validation failure; message names the field path."""


def _get(d, key, path, required=True, default=None):
    if not isinstance(d, dict):
        raise ConfigError(f"expected an object at {path or 'top level'}")
    if key not in d:
        if required:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"missing field: {where}")
        return default
    return d[key]


def _as_int(v, path, minimum=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"field {path} must be an integer")
    if minimum is not None and v < minimum:
        raise ConfigError(f"field {path} must be >= {minimum}")
    return v


def _as_float(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"field {path} must be a number")
    return float(v)


def _as_float_list(v, path):
    if not isinstance(v, list) or not v:
        raise ConfigError(f"field {path} must be a non-empty list of numbers")
    return [_as_float(x, f"{path}[{i}]") for i, x in enumerate(v)]


def _as_int_list(v, path):
    if not isinstance(v, list) or not v:
        raise ConfigError(f"field {path} must be a non-empty list of integers")
    return [_as_int(x, f"{path}[{i}]", minimum=1) for i, x in enumerate(v)]


class ExperimentConfig:
    """Validated experiment description.

    Carries the raw resolved dict (echoed into reports) plus typed views of
    the common blocks; kind-specific validation happens in the handlers so
    error messages can name exact field paths.
    """

    def __init__(self, data):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        self.kind = _get(data, "kind", "")
        if self.kind not in KINDS:
            raise ConfigError(
                f"field kind must be one of {', '.join(KINDS)}")
        self.N = _as_int(_get(data, "N", ""), "N", minimum=2)
        self.seed = _as_int(data.get("seed", 0), "seed")
        self.tolerance = _as_float(data.get("tolerance", 1e-9), "tolerance")
        self.geometry = data.get("geometry")
        self.couplings = data.get("couplings")
        self.background = data.get("background")
        self.scan = data.get("scan")
        self.options = data.get("options", {})
        if not isinstance(self.options, dict):
            raise ConfigError("field options must be an object")
        self.raw = data

    # -- geometry ----------------------------------------------------------

    def torus(self):
        g = self.geometry
        if g is None:
            raise ConfigError("missing field: geometry")
        d = _as_int(_get(g, "d", "geometry"), "geometry.d", minimum=1)
        L = _as_int(_get(g, "L", "geometry"), "geometry.L", minimum=2)
        P = _as_int(_get(g, "P", "geometry"), "geometry.P", minimum=0)
        return build_torus(d, L), P

    def suspension(self):
        spatial, P = self.torus()
        M = _as_int(_get(self.geometry, "M", "geometry"), "geometry.M",
                    minimum=1)
        return spatial, suspend(spatial, M), M, P

    # -- couplings ---------------------------------------------------------

    def trotter_params(self, M):
        c = self.couplings
        if c is None:
            raise ConfigError("missing field: couplings")
        beta = _as_float(_get(c, "beta", "couplings"), "couplings.beta")
        kw = {"N": self.N, "M": M, "beta": beta}
        for name in ("J", "K"):
            if name in c and c[name] is not None:
                v = c[name]
                kw[name] = (np.asarray(_as_float_list(v, f"couplings.{name}"))
                            if isinstance(v, list)
                            else _as_float(v, f"couplings.{name}"))
        for name in ("g", "h"):
            if c.get(name) is not None:
                arr = np.asarray(c[name], dtype=float)
                if arr.ndim not in (1, 2) or arr.shape[-1] != self.N:
                    raise ConfigError(
                        f"field couplings.{name} must have {self.N} columns")
                kw[name] = arr
        return TrotterParams(**kw)


def parse_chain(cx, degree, N, entries, path):
    """Cell list with coefficients -> chain vector on the given complex."""
    if not isinstance(entries, list):
        raise ConfigError(f"field {path} must be a list of cells")
    data = np.zeros(cx.num_cells(degree), dtype=np.int64)
    for i, ent in enumerate(entries):
        coords = tuple(_as_int(v, f"{path}[{i}].coords")
                       for v in _get(ent, "coords", f"{path}[{i}]"))
        axes = tuple(_as_int(v, f"{path}[{i}].axes")
                     for v in _get(ent, "axes", f"{path}[{i}]"))
        coeff = _as_int(ent.get("coeff", 1), f"{path}[{i}].coeff")
        try:
            idx = cx.index[degree][(coords, axes)]
        except (KeyError, IndexError):
            raise ConfigError(
                f"field {path}[{i}] names no degree-{degree} cell: "
                f"coords={list(coords)} axes={list(axes)}")
        data[idx] += coeff
    return FieldChain(cx, degree, N, data % N)


def load_config(source):
    """Config from a path, JSON text handle, or dict."""
    if isinstance(source, dict):
        return ExperimentConfig(source)
    with open(source) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return ExperimentConfig(data)


# ---------------------------------------------------------------------------
# experiment handlers


def _random_tables(S, P, N, rng, scale=1.0):
    """Seed-derived complex tables with zero modes pushed off the origin."""
    W = scale * (rng.normal(size=(S.num_cells(P + 1), N))
                 + 1j * rng.normal(size=(S.num_cells(P + 1), N)))
    V = scale * (rng.normal(size=(S.num_cells(P), N))
                 + 1j * rng.normal(size=(S.num_cells(P), N)))
    W[:, 0] += 3.0
    V[:, 0] += 3.0
    return LocalWeights(cx=S, P=P, N=N, W=W, V=V)


def _random_params(spatial, P, N, M, rng):
    n_a = spatial.num_cells(P - 1)
    n_b = spatial.num_cells(P)
    n_c = spatial.num_cells(P + 1)
    g = 0.4 * (rng.normal(size=(n_b, N)) + 1j * rng.normal(size=(n_b, N)))
    h = 0.4 * (rng.normal(size=(n_b, N)) + 1j * rng.normal(size=(n_b, N)))
    return TrotterParams(N=N, M=M, beta=rng.uniform(0.5, 1.2),
                         J=rng.uniform(0.3, 1.2, n_a),
                         K=rng.uniform(0.3, 1.2, n_c), g=g, h=h)


def _insertions_from_config(cfg, spatial, dc_sp, P):
    bg = cfg.background or {}
    d = spatial.dim
    spec = {
        "wilson": (spatial, P),
        "thooft": (dc_sp.dual, d - P),
        "electric_twist": (spatial, P - 1),
        "magnetic_twist": (dc_sp.dual, d - P - 1),
    }
    chains = {}
    for name, (cx, deg) in spec.items():
        if bg.get(name):
            chains[name] = parse_chain(cx, deg, cfg.N, bg[name],
                                       f"background.{name}")
    return chains


def _run_oracle_vs_classical(cfg, threads):
    spatial, S, M, P = cfg.suspension()
    dc_sp = dualize(spatial)
    dc_bar = dualize(S)
    chains = _insertions_from_config(cfg, spatial, dc_sp, P)
    draws = _as_int(cfg.options.get("draws", 1), "options.draws", minimum=1)

    insertion_cases = [("none", {})]
    if chains:
        insertion_cases.append(("config", chains))

    rows = []
    worst = 0.0
    for draw in range(draws):
        rng = np.random.default_rng(cfg.seed + 7919 * draw)
        params = (cfg.trotter_params(M) if cfg.couplings is not None
                  else _random_params(spatial, P, cfg.N, M, rng))
        w = trotter_weights(S, params, P)
        for label, lifted in insertion_cases:
            ins = InsertionData(dc=dc_sp, N=cfg.N, P=P, **lifted) \
                if lifted else None
            bg = lift_background(dc_bar, dc_sp, P, cfg.N, **lifted) \
                if lifted else None
            tr_q = decorated_trace(spatial, P, params, ins=ins)
            tr_c = partition_sliced(S, w, bg)
            resid = abs(tr_q - tr_c) / max(1.0, abs(tr_q))
            worst = max(worst, resid)
            rows.append({"draw": draw, "background": label,
                         "quantum": _cplx(tr_q), "classical": _cplx(tr_c),
                         "residual": resid})
    passed = worst < cfg.tolerance
    return passed, {"cases": rows, "worst_residual": worst,
                    "threads": threads}, {}


def _run_defect_identities(cfg, threads):
    spatial, S, M, P = cfg.suspension()
    dc = dualize(S)
    rng = np.random.default_rng(cfg.seed)
    w = _random_tables(S, P, cfg.N, rng)
    amp = defect_amplitudes(w)
    pair = fm.linking_pair(dc, P, cfg.N)

    backgrounds = [("zero", zero_background(dc, P, cfg.N))]
    bgblock = cfg.background or {}
    if bgblock:
        mag = parse_chain(dc.dual, S.dim - P - 1, cfg.N,
                          bgblock["magnetic"], "background.magnetic") \
            if bgblock.get("magnetic") else None
        ele = parse_chain(S, P, cfg.N, bgblock["electric"],
                          "background.electric") \
            if bgblock.get("electric") else None
        backgrounds.append(
            ("config", background_charge(dc, P, cfg.N, magnetic=mag,
                                         electric=ele)))

    norm = vacuum_normalization(S, w)
    flat = flat_cocycle_count(S, P, cfg.N)
    sectors = sector_amplitudes_exact(dc, amp, pair=pair)

    rows = []
    worst = 0.0
    for label, bg in backgrounds:
        z = partition_exact(S, w, bg, workers=threads)
        gas = closed_defect_sum(dc, amp, bg=bg, pair=pair)
        recon = reconstruct_from_sectors(sectors, bg, pair)
        scale = max(1.0, abs(z))
        r1 = abs(z - norm * flat * gas) / scale
        r2 = abs(z - norm * flat * recon) / scale
        worst = max(worst, r1, r2)
        rows.append({"background": label, "partition": _cplx(z),
                     "closed_defect_residual": r1,
                     "sector_reconstruction_residual": r2})
    passed = worst < cfg.tolerance
    return passed, {"cases": rows, "worst_residual": worst,
                    "flat_count": int(flat)}, {}


def _run_low_activity(cfg, threads):
    spatial, S, M, P = cfg.suspension()
    dc = dualize(S)
    params = cfg.trotter_params(M)
    w = trotter_weights(S, params, P)
    amp = defect_amplitudes(w)
    pair = fm.linking_pair(dc, P, cfg.N)

    mode = cfg.options.get("counting_mode", "sharp")
    if mode not in ("sharp", "crude"):
        raise ConfigError("field options.counting_mode must be sharp or "
                          "crude")
    bounds = activity_bounds(dc, P, amp, mode=mode)
    regions = {sp: bounds.region(sp) for sp in ("magnetic", "electric")}

    max_size = _as_int(cfg.options.get("max_size", 4), "options.max_size",
                       minimum=1)
    l_values = tuple(_as_int_list(cfg.options.get("l_values", [1, 2]),
                                  "options.l_values"))
    gas = polymer_gas(dc, P, amp, pair, max_size=max_size)
    tails = {}
    tails_ok = True
    for sp in ("magnetic", "electric"):
        if regions[sp].ok:
            rep = tail_and_systole(gas, bounds, sp, l_values=l_values)
            tails[sp] = {"c_la": rep.c_la, "ratio": rep.ratio,
                         "systole": rep.systole, "tail_ok": rep.tail_ok,
                         "bad_weight_ok": rep.bad_weight_ok}
            tails_ok = tails_ok and rep.tail_ok and rep.bad_weight_ok
        else:
            tails[sp] = {"skipped": "activity region test failed"}

    tables = {}
    census_cfg = cfg.options.get("census")
    if census_cfg:
        c_max = _as_int(_get(census_cfg, "max_size", "options.census"),
                        "options.census.max_size", minimum=1)
        roots = tuple(census_cfg.get("roots", [0]))
        for sp in ("magnetic", "electric"):
            rep = counting_constant(dc, P, cfg.N, sp, mode="empirical",
                                    max_size=c_max, roots=roots)
            tables[f"census_{sp}.csv"] = census_csv(rep)

    results = {
        "activities": {"t_m": bounds.t_m, "t_e": bounds.t_e,
                       "C_m": bounds.c_m.value, "C_e": bounds.c_e.value},
        "regions": {sp: {"ok": r.ok, "product": r.product,
                         "threshold": r.threshold, "margin": r.margin}
                    for sp, r in regions.items()},
        "tails": tails,
    }
    return tails_ok, results, tables


def _run_kw_duality(cfg, threads):
    spatial, S, M, P = cfg.suspension()
    dc = dualize(S)
    if cfg.couplings is not None:
        params = cfg.trotter_params(M)
        w = trotter_weights(S, params, P)
    else:
        params = None
        w = _random_tables(S, P, cfg.N, np.random.default_rng(cfg.seed))
    raw = kw_identity_check(dc, w)
    results = {
        "raw": {"lhs": _cplx(raw.lhs), "rhs": _cplx(raw.rhs),
                "residual": raw.residual,
                "normalized_residual": raw.norm_residual},
    }
    passed = raw.residual < cfg.tolerance \
        and raw.norm_residual < cfg.tolerance
    if params is not None:
        trep = kw_trotter_check(dc, params, P)
        results["trotter"] = {
            "lhs": _cplx(trep.lhs), "rhs": _cplx(trep.rhs),
            "residual": trep.residual,
            "weight_residual": trep.weight_residual,
            "factor": trep.factor,
            "factor_expected": trep.factor_expected,
        }
        passed = passed and trep.ok and trep.residual < cfg.tolerance
    return passed, results, {}


def _run_gauge_marginals(cfg, threads):
    X, P = cfg.torus()
    p_values = _as_float_list(cfg.options.get("p_values", [0.25, 0.5, 0.75]),
                              "options.p_values")
    rows = []
    passed = True
    for p in p_values:
        rep = joint_marginals_check(X, P, cfg.N, p)
        rows.append({"p": p,
                     "gauge_constant": rep.gauge_constant,
                     "gauge_expected": rep.gauge_expected,
                     "gauge_variance": rep.gauge_variance,
                     "prcm_constant": rep.prcm_constant,
                     "prcm_expected": rep.prcm_expected,
                     "prcm_variance": rep.prcm_variance,
                     "ok": rep.ok})
        passed = passed and rep.ok
    lines = ["p,gauge_constant,gauge_variance,prcm_constant,prcm_variance"]
    for r in rows:
        lines.append(f"{r['p']!r},{r['gauge_constant']!r},"
                     f"{r['gauge_variance']!r},{r['prcm_constant']!r},"
                     f"{r['prcm_variance']!r}")
    return passed, {"points": rows}, {
        "marginals.csv": "\n".join(lines) + "\n"}


def _run_sw_scan(cfg, threads):
    sc = cfg.scan
    if sc is None:
        raise ConfigError("missing field: scan")
    L_values = _as_int_list(_get(sc, "L_values", "scan"), "scan.L_values")
    p_values = _as_float_list(_get(sc, "p_values", "scan"), "scan.p_values")
    sweeps = _as_int(sc.get("sweeps", 2000), "scan.sweeps", minimum=1)
    chains = _as_int(sc.get("chains", 64), "scan.chains", minimum=2)
    thin = _as_int(sc.get("thin", 10), "scan.thin", minimum=1)
    burn = sc.get("burn")
    if burn is not None:
        burn = _as_int(burn, "scan.burn", minimum=0)
    g = cfg.geometry or {}
    P = _as_int(g.get("P", 1), "geometry.P", minimum=0)
    rows = transition_scan(L_values, p_values, N=cfg.N, P=P, sweeps=sweeps,
                           seed=cfg.seed, chains=chains, burn=burn,
                           thin=thin)
    out = [dict(zip(("N", "P", "L", "p", "sweeps", "seed", "muA", "muA_err",
                     "muS", "muS_err", "lockE", "lockE_err", "bP_mean"),
                    r.as_tuple())) for r in rows]
    return True, {"rows": out}, {"scan.csv": scan_csv(rows)}


_HANDLERS = {
    "oracle-vs-classical": _run_oracle_vs_classical,
    "defect-identities": _run_defect_identities,
    "low-activity-report": _run_low_activity,
    "kw-duality": _run_kw_duality,
    "gauge-prcm-marginals": _run_gauge_marginals,
    "sw-scan": _run_sw_scan,
}


def _cplx(z):
    z = complex(z)
    return {"re": z.real, "im": z.imag}


def _json_default(obj):
    if isinstance(obj, (np.integer, np.floating, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return _cplx(obj)
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def run(config, out_dir, threads=1, seed=None):
    """Execute one experiment; write report.json and tables; return status.

    The report embeds the library version and the fully resolved config;
    outputs are deterministic for a fixed (config, seed), independent of
    the thread count.
    """
    cfg = config if isinstance(config, ExperimentConfig) \
        else load_config(config)
    if seed is not None:
        cfg.seed = _as_int(seed, "seed")
        cfg.raw = dict(cfg.raw, seed=cfg.seed)
    resolved = dict(cfg.raw)
    resolved.setdefault("seed", cfg.seed)
    resolved.setdefault("tolerance", cfg.tolerance)
    resolved["threads"] = threads

    passed, results, tables = _HANDLERS[cfg.kind](cfg, threads)

    os.makedirs(out_dir, exist_ok=True)
    report = {
        "version": __version__,
        "kind": cfg.kind,
        "config": resolved,
        "passed": bool(passed),
        "results": results,
    }
    report_path = os.path.join(out_dir, "report.json")
    with open(report_path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True,
                  default=_json_default)
        fh.write("\n")
    for name, text in tables.items():
        with open(os.path.join(out_dir, name), "w") as fh:
            fh.write(text)
    return (0 if passed else 1), report


def _default_threads():
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            return 1
    return 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="znlab",
        description="Exact-identity experiments and scans for Z_N form "
                    "fields on periodic lattices.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a JSON experiment config")
    p_run.add_argument("config", help="path to the experiment JSON")
    p_run.add_argument("--out", default=None,
                       help="output directory (default: <config>.out)")
    p_run.add_argument("--threads", type=int, default=None,
                       help=f"worker count (default ${THREADS_ENV} or 1)")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the config seed")

    p_const = sub.add_parser("constants",
                             help="print the closed-form critical constants")
    p_const.add_argument("--N", type=int, required=True)
    p_const.add_argument("--P", type=int, required=True)

    args = parser.parse_args(argv)

    if args.command == "constants":
        try:
            c = critical_constants(args.N, args.P)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(json.dumps({"N": args.N, "P": args.P, "p_sd": c.p_sd,
                          "beta_sd": c.beta_sd,
                          "nonlocal_move_prob": c.nonlocal_move_prob},
                         indent=2, sort_keys=True))
        return 0

    out_dir = args.out if args.out is not None else args.config + ".out"
    threads = args.threads if args.threads is not None else \
        _default_threads()
    try:
        code, report = run(args.config, out_dir, threads=threads,
                           seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except fm.CompositeModulusError as exc:
        print(f"composite modulus unsupported here: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        msg = str(exc)
        if "cap" in msg or "too large" in msg or "budget" in msg:
            print(f"instance too large: {msg}; reduce L, M, or d",
                  file=sys.stderr)
            return 2
        raise
    status = "PASS" if code == 0 else "FAIL"
    print(f"{status} kind={report['kind']} -> "
          f"{os.path.join(out_dir, 'report.json')}")
    return code


if __name__ == "__main__":
    sys.exit(main())

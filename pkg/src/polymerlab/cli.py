"""Command-line entry point: ``polymerlab <subcommand> [--config FILE] [--dotted.key VALUE ...]``.

Exit codes: 0 success, 2 validation error, 3 numerical error, 4 failed
acceptance check (``test-gauss`` and ``report``).
"""

import argparse
import math
import os
import sys
import time

import numpy as np

from . import __version__, set_threads
from . import config as cfgmod
from .errors import ConfigError, NumericalError, PolymerLabError, ValidationError
from .io import atomic_write, build_hash, csv_text, dumps

SUBCOMMANDS = ("kernel", "hbeta", "gamma", "betal2", "bridge", "partition", "fluct", "l2error", "test-gauss",
               "report")
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_FAILED = 0, 2, 3, 4


def _spec(cfg):
    from .mollifier import KernelSpec
    return KernelSpec(cfg["dimension"], cfg["kernel"]["profile"], cfg["kernel"]["support_radius"])


def _hsol(cfg, spec, beta=None):
    from .functionals import h_beta_fixed_point
    q = cfg["quad"]
    return h_beta_fixed_point(cfg["beta"] if beta is None else beta, r_max=q["r_max"], m=q["nodes"], spec=spec,
                              tol=q["tol"], n_max=q["max_iter"])


def _envelope(cfg, command, result):
    # the destination does not affect results, so it stays out of the record
    cfg = {k: v for k, v in cfg.items() if k != "output"}
    return dict(command=command, config=cfg, build=build_hash(), version=__version__, result=result)


# ---------------------------------------------------------------------------
# subcommands; each returns (json_result, csv_text_or_None)

def cmd_kernel(cfg):
    spec = _spec(cfg)
    phi = [None if math.isnan(p) else float(p) for p in spec.phi_table]
    rows = [(float(r), "" if p is None else p, float(q)) for r, p, q in zip(spec.radii, phi, spec.R_table)]
    res = dict(profile=spec.profile, support_radius=spec.support_radius, R0=spec.R0,
               norm_const=None if math.isnan(spec.norm_const) else spec.norm_const,
               radius=spec.radii, phi=phi, R=spec.R_table)
    return res, csv_text(["radius", "phi", "R"], rows)


def cmd_hbeta(cfg):
    spec = _spec(cfg)
    h = _hsol(cfg, spec)
    res = dict(beta=h.beta, iterations=h.iterations, residual=h.residual, h0=float(h(0.0)), moment=h.moment,
               radius=h.radii, value=h.values)
    return res, csv_text(["radius", "value"], zip(h.radii.tolist(), h.values.tolist()))


def cmd_gamma(cfg):
    from .functionals import gamma_squared, gamma_squared_mc, gamma_squared_rescaled
    spec = _spec(cfg)
    h = _hsol(cfg, spec)
    ex = cfg["experiment"]
    mc = gamma_squared_mc(cfg["beta"], spec, n_outer=ex["n_outer"], n_inner=ex["n_inner"], H=cfg["mc"]["horizon"],
                          dt=cfg["mc"]["path_dt"], rng=cfg["seed"])
    res = dict(beta=cfg["beta"], gamma2=gamma_squared(cfg["beta"], h, spec),
               gamma2_rescaled_form=gamma_squared_rescaled(cfg["beta"], h, spec), gamma2_mc=mc.to_dict())
    return res, csv_text(["method", "value", "std_error"],
                         [("quadrature", res["gamma2"], 0.0), ("mc", mc.value, mc.std_error)])


def cmd_betal2(cfg):
    from .functionals import beta_L2_estimate, critical_beta_spectral
    spec = _spec(cfg)
    q = cfg["quad"]
    lo, hi = beta_L2_estimate(spec, tuple(cfg["experiment"]["bracket"]), cfg["experiment"]["tol"],
                              r_max=q["r_max"], m=q["nodes"], n_max=q["max_iter"])
    res = dict(lower=lo, upper=hi, spectral=critical_beta_spectral(spec, q["r_max"], q["nodes"]))
    return res, csv_text(["lower", "upper", "spectral"], [(lo, hi, res["spectral"])])


def cmd_bridge(cfg):
    from .functionals import bridge_functional
    spec = _spec(cfg)
    ex, mc = cfg["experiment"], cfg["mc"]
    e = bridge_functional(cfg["beta"], ex["a"], ex["b"], ex["T"], dt=mc["path_dt"], n=mc["inner_paths"],
                          rng=cfg["seed"], spec=spec, rule=mc["rule"])
    return e.to_dict(), csv_text(["value", "std_error", "n"], [(e.value, e.std_error, e.n_samples)])


def cmd_partition(cfg):
    from .polymer import noise_variance, partition_replicas
    spec = _spec(cfg)
    ex, mc, g = cfg["experiment"], cfg["mc"], cfg["grid"]
    vals, ses = partition_replicas(cfg["beta"], [ex["T"]], spec, mc["replicas"], mc["inner_paths"], cfg["seed"],
                                   x=np.asarray(ex["x"], float), dx=g["dx"], dt=g["dt"])
    res = dict(values=vals[:, 0], std_errors=ses[:, 0], mean=float(vals.mean()))
    if mc["replicas"] >= 2:
        res["noise_variance"] = noise_variance(vals[:, 0], ses[:, 0]).to_dict()
    rows = [(r, vals[r, 0], ses[r, 0]) for r in range(len(vals))]
    return res, csv_text(["replica", "value", "std_error"], rows)


def _ensemble(cfg, kind=None):
    from . import fluctuations as fl
    spec = _spec(cfg)
    ex, mc, g = cfg["experiment"], cfg["mc"], cfg["grid"]
    kw = dict(inner_n=mc["inner_paths"], replicas=mc["replicas"], base_seed=cfg["seed"], spec=spec, dx=g["dx"],
              dt=g["dt"], t_max_factor=mc["t_max_factor"], progress=_progress)
    if ex["test_function"] is not None:
        tf = ex["test_function"]
        try:
            f = (fl.AveragingFunction.mixture(tf["weights"], tf["means"], tf["sigmas"]) if tf["kind"] == "mixture"
                 else fl.AveragingFunction.box(tf["lo"], tf["hi"], tf.get("height", 1.0)))
        except (KeyError, TypeError) as exc:
            raise ConfigError("cli.fluct", f"bad test_function: {exc}") from None
        t = ex["points"][0][1]
        return fl.build_averaged_ensemble(f, t, cfg["beta"], ex["T"], kind=kind or ex["kind"], **kw), f
    pts = [(tuple(p[0]), float(p[1])) for p in ex["points"]]
    return fl.build_ensemble(kind or ex["kind"], pts, cfg["beta"], ex["T"], **kw), None


def _progress(done, total):
    if done == total or done % max(1, total // 20) == 0:
        print(f"replica {done}/{total}", file=sys.stderr)


def cmd_fluct(cfg):
    ens, _ = _ensemble(cfg)
    rows = [(r, j, ens.samples[r, j]) for r in range(ens.samples.shape[0]) for j in range(ens.samples.shape[1])]
    res = dict(kind=ens.kind, beta=ens.beta, T=ens.T, T_max=ens.T_max, points=ens.points,
               seeds=[int(s) for s in ens.seeds], inner_mc=ens.inner_mc, n_invalid=ens.n_invalid,
               valid=ens.valid, samples=ens.samples, params=ens.params)
    return res, csv_text(["replica", "point", "value"], rows)


def cmd_l2error(cfg):
    from .functionals import l2_error_formula
    spec = _spec(cfg)
    ex = cfg["experiment"]
    h = _hsol(cfg, spec)
    ests = [l2_error_formula(cfg["beta"], T, h, spec, n_outer=ex["n_outer"], n_inner=ex["n_inner"],
                             rng=cfg["seed"] + k, rule=cfg["mc"]["rule"]) for k, T in enumerate(ex["T_ladder"])]
    res = dict(T=ex["T_ladder"], estimates=[e.to_dict() for e in ests])
    if len(ests) >= 3:
        from .stats import trend_decreasing
        tr = trend_decreasing([e.value for e in ests], [e.std_error for e in ests])
        res["trend_decreasing"] = dict(passed=tr.passed, margin=tr.margin)
    return res, csv_text(["T", "value", "std_error"], [(T, e.value, e.std_error) for T, e in zip(ex["T_ladder"], ests)])


def cmd_test_gauss(cfg):
    from . import fluctuations as fl
    from .functionals import gamma_squared
    from .stats import ks_test_normal, moments
    spec = _spec(cfg)
    ex = cfg["experiment"]
    g2 = gamma_squared(cfg["beta"], _hsol(cfg, spec), spec)
    if ex["ensemble"]:
        samples, f = _read_ensemble(ex["ensemble"]), None
        t_ref = ex["points"][0][1]
    else:
        ens, f = _ensemble(cfg)
        samples = ens.valid_samples()[:, 0]
        t_ref = ens.points[0][1]
    if f is not None:
        var = fl.averaged_variance_reference(f, t_ref, g2, spec.dimension)
    else:
        p = ex["points"][0]
        var = float(fl.cov_U_reference([(tuple(p[0]), float(p[1]))], g2, spec.dimension).cov_U[0, 0])
    ks = ks_test_normal(samples, 0.0, var)
    m = moments(samples)
    passed = ks.p_value > 0.01
    res = dict(test="ks_normal", params=dict(mean=0.0, variance=var, gamma2=g2), statistic=ks.statistic,
               p_value=ks.p_value, n=ks.n, moments=m.to_dict(), **{"pass": passed})
    csv = csv_text(["test", "statistic", "p_value", "pass"], [("ks_normal", ks.statistic, ks.p_value, passed)])
    return res, csv, passed


def _read_ensemble(path):
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError("cli.test-gauss", f"cannot read ensemble {path}: {exc}") from None
    first = data[:, 1] == data[0, 1]
    return data[first, 2]


def cmd_report(cfg):
    from . import acceptance
    results = acceptance.run(cfg["acceptance"]["criteria"], log=lambda s: print(s, file=sys.stderr))
    rows = [r.to_dict() for r in results]
    passed = all(r.passed for r in results)
    table = "\n".join(r.line() for r in results)
    print(table)
    res = dict(criteria=rows, all_passed=passed)
    csv = csv_text(["id", "name", "passed", "summary"], [(r.id, r.name, r.passed, f'"{r.summary}"') for r in results])
    return res, csv, passed


COMMANDS = {
    "kernel": cmd_kernel, "hbeta": cmd_hbeta, "gamma": cmd_gamma, "betal2": cmd_betal2, "bridge": cmd_bridge,
    "partition": cmd_partition, "fluct": cmd_fluct, "l2error": cmd_l2error, "test-gauss": cmd_test_gauss,
    "report": cmd_report,
}


# ---------------------------------------------------------------------------

def _parse(argv):
    p = argparse.ArgumentParser(prog="polymerlab", description="Directed polymer and SHE/KPZ fluctuation lab.")
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: $POLYMERLAB_THREADS)")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    args, rest = p.parse_known_args(argv)
    overrides = []
    i = 0
    while i < len(rest):
        tok = rest[i]
        if not tok.startswith("--") or len(tok) == 2:
            raise ConfigError("cli.parse", f"unexpected argument {tok!r}")
        key, eq, val = tok[2:].partition("=")
        if not eq:
            if i + 1 >= len(rest):
                raise ConfigError("cli.parse", f"missing value for --{key}")
            val = rest[i + 1]
            i += 1
        overrides.append((key, cfgmod.parse_value(val)))
        i += 1
    return args, overrides


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    t0 = time.perf_counter()
    try:
        args, overrides = _parse(argv)
        cfg = cfgmod.load_file(args.config, overrides) if args.config else cfgmod.load(None, overrides)
        threads = args.threads or int(os.environ.get("POLYMERLAB_THREADS", "0") or 0)
        set_threads(threads)
        out = COMMANDS[args.command](cfg)
        res, csv = out[0], out[1]
        passed = out[2] if len(out) > 2 else True
        text = dumps(_envelope(cfg, args.command, res)) if cfg["format"] == "json" else csv
        if cfg["output"]:
            atomic_write(cfg["output"], text)
            if cfg["format"] == "csv":
                atomic_write(cfg["output"] + ".json", dumps(_envelope(cfg, args.command, res)))
        elif args.command != "report":
            try:
                sys.stdout.write(text)
                sys.stdout.flush()
            except BrokenPipeError:
                sys.stdout = open(os.devnull, "w")
        code = EXIT_OK if passed else EXIT_FAILED
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_VALIDATION
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_NUMERICAL
    except PolymerLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_NUMERICAL
    print(f"wall time {time.perf_counter() - t0:.2f} s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

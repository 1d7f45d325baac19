"""Command-line experiment runner.

Every subcommand reads its parameters from an optional JSON file
(``--config``) and from flags, flags taking precedence. ``--seed`` is
mandatory. Artifacts go to ``--out`` (default: current directory):

``trace.csv``
    Per-iteration trace (commands that run an iteration).
``summary.json``
    The fully resolved configuration plus headline results.
``report.json``
    ``{trials, violations, worst_margin, ...}`` for the ``probe-*`` commands.
``privacy.json``
    ``{epsilon, delta, mechanism, noisy_products, sigma_or_lambda}`` for
    private runs.

Exit codes: 0 on success, 2 on invalid configuration or unmet
preconditions, 3 when an iteration loses rank or fails to converge.
"""
import argparse
import csv
import json
import math
from pathlib import Path
import sys

import numpy as np
from scipy.stats import binomtest

from . import __version__
from .dense import (
    coherence,
    dct_basis,
    load_matrix,
    random_orthogonal,
    save_matrix,
    symmetric_eig,
    symmetrize,
    with_spectrum,
)
from .errors import NoConvergence, NoisyPowerError, RankDeficient, ConfigInvalid
from .npm import GaussianNoise, LaplacianNoise, NpmConfig, ZeroNoise, npm_run, probe_conjecture
from .private import (
    PrivacyParams,
    incoherence_trace,
    ppm_run,
    private_low_rank,
    sign_profile,
    spectral_ppm_run,
)
from .streaming import (
    FileStream,
    SpikedCovarianceModel,
    SpikedStream,
    SpmConfig,
    spiked_roundness,
    spm_run,
    sweep_samples,
)

EXIT_OK, EXIT_CONFIG, EXIT_RANK = 0, 2, 3


# -- parameter schema ----------------------------------------------------------

def _floats(value):
    if isinstance(value, str):
        return [float(v) for v in value.replace(",", " ").split()]
    if isinstance(value, (int, float)):
        return [float(value)]
    return [float(v) for v in value]


def _ints(value):
    return [int(v) for v in _floats(value)]


def _spectrum(value):
    # a name ("harmonic", "linear") or explicit values
    if isinstance(value, str) and value in ("harmonic", "linear"):
        return value
    return _floats(value)


# name -> (parser, help)
PARAMS = {
    "matrix": (str, "path to a matrix file (header 'd' for symmetric, 'm n' for general)"),
    "x0": (str, "path to a starting basis (general 'm n' matrix file); random when omitted"),
    "samples": (str, "path to a sample file, one whitespace-separated row per sample"),
    "reference": (str, "covariance matrix file used only for tracing spm runs"),
    "k": (int, "target dimension"),
    "p": (int, "iterate width"),
    "L": (int, "number of iterations"),
    "n": (int, "number of samples"),
    "d": (int, "ambient dimension"),
    "noise": (str, "noise model: zero, gaussian or laplacian"),
    "noise_scale": (float, "per-entry noise scale (gaussian std or laplace scale)"),
    "epsilon": (float, "privacy parameter epsilon"),
    "delta": (float, "privacy parameter delta"),
    "mechanism": (str, "gaussian-entry-scaled, gaussian-spectral or laplacian-spectral"),
    "tau": (float, "initialisation constant tau"),
    "eps_target": (float, "target accuracy used to pick L"),
    "lambdas": (_floats, "spike strengths, comma separated"),
    "sigma": (float, "noise level (spiked model) or Gaussian noise scale (sign probe)"),
    "chunk": (int, "rows per streaming chunk (0: 8p)"),
    "conjecture": (int, "conjecture id (1 or 2)"),
    "trials": (int, "number of trials"),
    "runs": (int, "number of independent runs"),
    "spectrum": (_spectrum, "eigenvalues (comma separated), or 'harmonic' / 'linear'"),
    "basis": (str, "eigenbasis for synthetic matrices: random, dct or identity"),
    "eps": (float, "accuracy parameter of the conjecture probe"),
    "c_conj": (float, "constant in the low-rank conjecture bound"),
    "column": (int, "iterate column examined by the sign probe"),
    "band": (float, "allowed deviation of sign frequencies from 1/2"),
    "alpha": (float, "significance level of the per-coordinate binomial test"),
    "rank": (int, "number of singular vectors entering the coherence"),
    "n_grid": (_ints, "ascending sample sizes, comma separated"),
    "seeds": (_ints, "seed count, or an explicit comma separated list"),
}

# command -> {param: default}; a default of REQUIRED must be supplied
REQUIRED = object()
COMMANDS = {
    "npm": dict(matrix=REQUIRED, k=1, p=None, L=REQUIRED, noise="zero", noise_scale=0.0, x0=None),
    "spm": dict(samples=None, reference=None, d=None, lambdas=None, sigma=None,
                k=None, p=None, n=REQUIRED, L=REQUIRED, chunk=0),
    "ppm": dict(matrix=REQUIRED, k=1, p=None, L=REQUIRED, epsilon=REQUIRED, delta=REQUIRED),
    "spectral-ppm": dict(matrix=REQUIRED, k=1, p=None, L=REQUIRED, epsilon=REQUIRED,
                         delta=None, mechanism="gaussian-spectral"),
    "lowrank": dict(matrix=REQUIRED, k=1, L=None, epsilon=REQUIRED, delta=REQUIRED,
                    tau=1.0, eps_target=0.1),
    "coherence": dict(matrix=REQUIRED, rank=None),
    "probe-conjecture": dict(conjecture=REQUIRED, trials=100, d=REQUIRED, k=REQUIRED,
                             p=REQUIRED, spectrum="harmonic", eps=0.1, noise_scale=1.0,
                             c_conj=10.0),
    "probe-signs": dict(matrix=None, d=None, spectrum=None, basis="random", p=1, L=10,
                        sigma=1.0, runs=400, column=0, band=0.13, alpha=1e-6),
    "probe-incoherence": dict(matrix=None, d=None, spectrum=None, basis="dct", k=1, p=1,
                              L=10, epsilon=REQUIRED, delta=REQUIRED,
                              mechanism="gaussian-entry-scaled", runs=100),
    "sweep-samples": dict(d=REQUIRED, lambdas=REQUIRED, sigma=REQUIRED, k=None, p=REQUIRED,
                          L=REQUIRED, n_grid=REQUIRED, seeds=20),
}
POSITIVE = {"k", "p", "L", "n", "d", "trials", "runs", "conjecture"}


def resolve_config(command, file_cfg, flag_cfg):
    """Merge defaults, config-file values and flags (in increasing priority).

    Raises
    ------
    ConfigInvalid
        For unknown keys, missing required values and values that fail basic
        range checks; ``field`` names the setting.
    """
    allowed = COMMANDS[command]
    merged = {}
    for source in (file_cfg, flag_cfg):
        for key, value in source.items():
            if key == "command":
                if value != command:
                    raise ConfigInvalid("command", f"config is for {value!r}, not {command!r}")
                continue
            if key == "seed":
                merged[key] = value
                continue
            if key not in allowed:
                raise ConfigInvalid(key, f"unknown setting '{key}' for {command}")
            merged[key] = value
    if merged.get("seed") is None:
        raise ConfigInvalid("seed", "a seed is required (--seed)")
    cfg = {"seed": _parse("seed", int, merged["seed"])}
    for key, default in allowed.items():
        value = merged.get(key, default)
        if value is REQUIRED:
            raise ConfigInvalid(key, f"missing required setting '{key}'")
        cfg[key] = None if value is None else _parse(key, PARAMS[key][0], value)
    for key in POSITIVE & cfg.keys():
        if cfg[key] is not None and cfg[key] < 1:
            raise ConfigInvalid(key, f"'{key}' must be >= 1, got {cfg[key]}")
    if cfg.get("p", 0) is None and cfg.get("k") is not None:
        cfg["p"] = cfg["k"]
    if cfg.get("k") is not None and cfg.get("p") is not None and cfg["k"] > cfg["p"]:
        raise ConfigInvalid("p", f"need k <= p, got k={cfg['k']}, p={cfg['p']}")
    for key in ("epsilon", "sigma", "noise_scale", "eps"):
        if cfg.get(key) is not None and not (cfg[key] >= 0 and math.isfinite(cfg[key])):
            raise ConfigInvalid(key, f"'{key}' must be finite and non-negative")
    if cfg.get("epsilon") == 0:
        raise ConfigInvalid("epsilon", "'epsilon' must be positive")
    return cfg


def _parse(key, parser, value):
    try:
        return parser(value)
    except (TypeError, ValueError) as e:
        raise ConfigInvalid(key, f"cannot parse '{key}': {value!r}") from e


# -- helpers -----------------------------------------------------------------

def _load_symmetric(path):
    try:
        M, symmetric = load_matrix(path)
    except OSError as e:
        raise ConfigInvalid("matrix", f"cannot read matrix: {e}") from e
    except ValueError as e:
        raise ConfigInvalid("matrix", str(e)) from e
    if symmetric:
        return M, False
    if M.shape[0] == M.shape[1] and np.allclose(M, M.T, rtol=1e-10, atol=0):
        return (M + M.T) / 2, False
    return symmetrize(M), True


def _spectrum_values(value, d):
    if value == "harmonic":
        return 1.0 / np.arange(1, d + 1)
    if value == "linear":
        return np.linspace(1.0, 1.0 / d, d)
    s = np.asarray(value, dtype=float)
    if s.shape != (d,):
        raise ConfigInvalid("spectrum", f"need {d} eigenvalues, got {s.size}")
    return s


def _synthetic_or_file(cfg, rng):
    """Matrix from ``matrix`` or from ``spectrum`` + ``basis``."""
    if cfg["matrix"] is not None:
        return _load_symmetric(cfg["matrix"])[0]
    if cfg["spectrum"] is None:
        raise ConfigInvalid("matrix", "give either 'matrix' or 'spectrum'")
    d = cfg["d"] or (len(cfg["spectrum"]) if not isinstance(cfg["spectrum"], str) else None)
    if d is None:
        raise ConfigInvalid("d", "'d' is required with a named spectrum")
    s = _spectrum_values(cfg["spectrum"], d)
    basis = {"random": lambda: random_orthogonal(d, rng), "dct": lambda: dct_basis(d),
             "identity": lambda: np.eye(d)}.get(cfg["basis"])
    if basis is None:
        raise ConfigInvalid("basis", f"unknown basis {cfg['basis']!r}")
    return with_spectrum(s, basis())


def _privacy(cfg, mechanism):
    delta = cfg.get("delta")
    if delta is None:
        if mechanism != "laplacian-spectral":
            raise ConfigInvalid("delta", "'delta' is required for Gaussian mechanisms")
        delta = 0.0
    try:
        return PrivacyParams(cfg["epsilon"], delta, mechanism)
    except NoisyPowerError as e:
        field = "mechanism" if "mechanism" in str(e) else "delta"
        raise ConfigInvalid(field, str(e)) from e


def _final(trace):
    r = trace.final
    return {"iterations": len(trace), "tan_theta": r.tan_theta, "cos_theta": r.cos_theta,
            "residual": r.residual, "x_inf_norm": r.x_inf_norm}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


# -- commands ------------------------------------------------------------------
# Each returns (summary dict, extra files {name: writer}) and may write trace.csv.

def _cmd_npm(cfg, rng, out):
    A, dilated = _load_symmetric(cfg["matrix"])
    noises = {"zero": lambda s: ZeroNoise(), "gaussian": GaussianNoise, "laplacian": LaplacianNoise}
    if cfg["noise"] not in noises:
        raise ConfigInvalid("noise", f"unknown noise model {cfg['noise']!r}")
    npm_cfg = NpmConfig(L=cfg["L"], p=cfg["p"], k=cfg["k"], seed=cfg["seed"])
    _check_dims(npm_cfg.k, npm_cfg.p, A.shape[0])
    X0 = None
    if cfg["x0"] is not None:
        try:
            X0 = load_matrix(cfg["x0"])[0]
        except (OSError, ValueError) as e:
            raise ConfigInvalid("x0", f"cannot read starting basis: {e}") from e
    X, trace = npm_run(A, npm_cfg, noises[cfg["noise"]](cfg["noise_scale"]), X0, rng=rng)
    trace.to_csv(out / "trace.csv")
    return {"result": _final(trace), "symmetrized": dilated}


def _check_dims(k, p, d):
    if p > d:
        raise ConfigInvalid("p", f"need p <= d, got p={p}, d={d}")


def _cmd_spm(cfg, rng, out):
    model_rng, run_rng = rng.spawn(2)
    if cfg["samples"] is not None:
        if cfg["k"] is None:
            raise ConfigInvalid("k", "'k' is required with a sample file")
        stream = FileStream(cfg["samples"])
        reference = _load_symmetric(cfg["reference"])[0] if cfg["reference"] else None
        meta = {"source": "file"}
    else:
        for key in ("d", "lambdas", "sigma"):
            if cfg[key] is None:
                raise ConfigInvalid(key, f"'{key}' is required without a sample file")
        reference = SpikedCovarianceModel.random(cfg["d"], cfg["lambdas"], cfg["sigma"], model_rng)
        stream = SpikedStream(reference, run_rng)
        meta = {"source": "spiked", "D": reference.D, "B": spiked_roundness(reference).B}
    k = cfg["k"] if cfg["k"] is not None else len(cfg["lambdas"])
    p = cfg["p"] if cfg["p"] is not None else k
    if k > p:
        raise ConfigInvalid("p", f"need k <= p, got k={k}, p={p}")
    _check_dims(k, p, stream.dim)
    spm_cfg = SpmConfig(n=cfg["n"], L=cfg["L"], p=p, k=k, seed=cfg["seed"], chunk=cfg["chunk"])
    if spm_cfg.T < 1:
        raise ConfigInvalid("n", f"need n >= L, got n={cfg['n']}, L={cfg['L']}")
    try:
        _, trace = spm_run(stream, spm_cfg, reference=reference, rng=run_rng)
    finally:
        if hasattr(stream, "close"):
            stream.close()
    trace.to_csv(out / "trace.csv")
    return {"result": _final(trace), "final_residual": trace.final.residual, "T": spm_cfg.T,
            "n_used": spm_cfg.T * spm_cfg.L, **meta}


def _cmd_ppm(cfg, rng, out):
    A, dilated = _load_symmetric(cfg["matrix"])
    _check_dims(cfg["k"], cfg["p"], A.shape[0])
    priv = _privacy(cfg, "gaussian-entry-scaled")
    _, trace, _ = ppm_run(A, cfg["p"], cfg["L"], priv, rng, k=cfg["k"])
    trace.to_csv(out / "trace.csv")
    _write_json(out / "privacy.json", trace.meta["ledger"])
    return {"result": _final(trace), "sigma": trace.meta["sigma"],
            "noisy_products": cfg["L"] + 1, "symmetrized": dilated}


def _cmd_spectral_ppm(cfg, rng, out):
    A, dilated = _load_symmetric(cfg["matrix"])
    _check_dims(cfg["k"], cfg["p"], A.shape[0])
    if cfg["mechanism"] not in ("gaussian-spectral", "laplacian-spectral"):
        raise ConfigInvalid("mechanism", f"spectral-ppm needs a spectral mechanism, got {cfg['mechanism']!r}")
    priv = _privacy(cfg, cfg["mechanism"])
    _, trace = spectral_ppm_run(A, cfg["p"], cfg["L"], priv, rng, k=cfg["k"])
    trace.to_csv(out / "trace.csv")
    _write_json(out / "privacy.json", trace.meta["ledger"])
    return {"result": _final(trace), "sigma_or_lambda": trace.meta["sigma_or_lambda"],
            "noisy_products": cfg["L"], "symmetrized": dilated}


def _cmd_lowrank(cfg, rng, out):
    A, dilated = _load_symmetric(cfg["matrix"])
    _check_dims(cfg["k"], 2 * cfg["k"], A.shape[0])
    priv = _privacy(cfg, "gaussian-entry-scaled")
    res = private_low_rank(A, cfg["k"], priv, rng, L=cfg["L"], tau=cfg["tau"],
                           eps_target=cfg["eps_target"])
    res.trace.to_csv(out / "trace.csv")
    save_matrix(out / "B.txt", res.B, symmetric=False)
    _write_json(out / "privacy.json", res.trace.meta["ledger"])
    return {"error": res.error, "L": res.L, "p": 2 * cfg["k"], "sigma": res.trace.meta["sigma"],
            "noisy_products": res.L + 1, "symmetrized": dilated}


def _cmd_coherence(cfg, rng, out):
    A, dilated = _load_symmetric(cfg["matrix"])
    spectrum = symmetric_eig(A)
    return {"mu": coherence(A, rank=cfg["rank"], spectrum=spectrum), "d": A.shape[0],
            "symmetrized": dilated}


def _cmd_probe_conjecture(cfg, rng, out):
    s = _spectrum_values(cfg["spectrum"], cfg["d"])
    rep = probe_conjecture(cfg["conjecture"], cfg["trials"], cfg["d"], cfg["k"], cfg["p"], s,
                           cfg["eps"], rng, noise_scale=cfg["noise_scale"], c_conj=cfg["c_conj"])
    report = rep.to_dict()
    _write_json(out / "report.json", report)
    return {"report": report}


def _cmd_probe_signs(cfg, rng, out):
    A = _synthetic_or_file(cfg, rng)
    if not 0 <= cfg["column"] < cfg["p"]:
        raise ConfigInvalid("column", f"column must be in [0, {cfg['p']})")
    _check_dims(1, cfg["p"], A.shape[0])
    prof = sign_profile(A, cfg["p"], cfg["L"], cfg["sigma"], cfg["runs"], rng, column=cfg["column"])
    dev = np.abs(prof.frequencies - 0.5)
    pvalues = [binomtest(int(round(f * prof.runs)), prof.runs).pvalue for f in prof.frequencies]
    report = {
        "trials": prof.runs,
        "violations": int(np.sum(dev > cfg["band"])),
        "worst_margin": float(cfg["band"] - dev.max()),
        "frequencies": prof.frequencies,
        "binomial_pvalues": pvalues,
        "binomial_rejections": int(sum(pv < cfg["alpha"] for pv in pvalues)),
    }
    _write_json(out / "report.json", report)
    return {"report": report}


def _cmd_probe_incoherence(cfg, rng, out):
    A = _synthetic_or_file(cfg, rng)
    _check_dims(cfg["k"], cfg["p"], A.shape[0])
    priv = _privacy(cfg, cfg["mechanism"])
    if priv.is_laplacian:
        raise ConfigInvalid("mechanism", "the incoherence probe needs a Gaussian mechanism")
    rep = incoherence_trace(A, cfg["p"], cfg["L"], priv, cfg["runs"], rng, k=cfg["k"])
    report = {"trials": cfg["runs"], **rep.to_dict(), "per_run_max": rep.per_run_max}
    _write_json(out / "report.json", report)
    return {"report": {k: v for k, v in report.items() if k != "per_run_max"}}


def _cmd_sweep_samples(cfg, rng, out):
    seeds = cfg["seeds"]
    seeds = list(range(seeds[0])) if len(seeds) == 1 else seeds
    model = SpikedCovarianceModel.random(cfg["d"], cfg["lambdas"], cfg["sigma"], rng)
    k = cfg["k"] if cfg["k"] is not None else model.k
    if k > cfg["p"]:
        raise ConfigInvalid("p", f"need k <= p, got k={k}, p={cfg['p']}")
    # offset per-run seeds by the master seed so different --seed values differ
    run_seeds = [cfg["seed"] * 1_000_003 + s for s in seeds]
    rows = sweep_samples(model, cfg["n_grid"], run_seeds, cfg["p"], cfg["L"], k=k)
    with open(out / "sweep.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["n", "median_residual"])
        for n, med, _ in rows:
            w.writerow([n, f"{med:.17g}"])
    return {"curve": [[n, med] for n, med, _ in rows],
            "residuals": {str(n): res for n, _, res in rows}}


HANDLERS = {
    "npm": _cmd_npm,
    "spm": _cmd_spm,
    "ppm": _cmd_ppm,
    "spectral-ppm": _cmd_spectral_ppm,
    "lowrank": _cmd_lowrank,
    "coherence": _cmd_coherence,
    "probe-conjecture": _cmd_probe_conjecture,
    "probe-signs": _cmd_probe_signs,
    "probe-incoherence": _cmd_probe_incoherence,
    "sweep-samples": _cmd_sweep_samples,
}


# -- entry point -----------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="noisypower", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, params in COMMANDS.items():
        sp = sub.add_parser(name, argument_default=argparse.SUPPRESS)
        sp.add_argument("--config", help="JSON file with settings (flags override it)")
        sp.add_argument("--seed", help="master seed (required)")
        sp.add_argument("--out", help="output directory (default: .)")
        for key in params:
            flag = "--" + key.replace("_", "-")
            # strings here; resolve_config does the typed parsing for both sources
            sp.add_argument(flag, dest=key, help=PARAMS[key][1])
    return parser


def main(argv=None):
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config", None)
    out = Path(args.pop("out", "."))
    try:
        file_cfg = {}
        if config_path is not None:
            try:
                file_cfg = json.loads(Path(config_path).read_text())
            except (OSError, json.JSONDecodeError) as e:
                raise ConfigInvalid("config", f"cannot read config: {e}") from e
            if not isinstance(file_cfg, dict):
                raise ConfigInvalid("config", "config file must hold a JSON object")
        cfg = resolve_config(command, file_cfg, args)
        out.mkdir(parents=True, exist_ok=True)
        rng = np.random.default_rng(cfg["seed"])
        summary = HANDLERS[command](cfg, rng, out)
    except ConfigInvalid as e:
        print(f"noisypower {command}: invalid '{e.field}': {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (RankDeficient, NoConvergence) as e:
        trace = getattr(e, "trace", None)
        if trace is not None and len(trace):
            trace.to_csv(out / "trace.csv")
        print(f"noisypower {command}: {e}", file=sys.stderr)
        return EXIT_RANK
    except (NoisyPowerError, ValueError) as e:
        print(f"noisypower {command}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    _write_json(out / "summary.json", {"command": command, "config": cfg, **summary})
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: simulate, fit, compare, diagnose and plotdata.

Exit codes: 0 success, 2 invalid input, 3 convergence failure, 4 I/O error.
Any flag can also be given in a flat ``key = value`` config file
(``--config``); flags on the command line win.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from tvgarch.diagnostics import compare as compare_loo
from tvgarch.diagnostics import LooResult, loo
from tvgarch.fitting import fit_two_step
from tvgarch.kernels import ARCH_MODES, VAR_LAG_MODES
from tvgarch.model import ModelConfig, TimeSeriesData
from tvgarch.priors import PriorFamily
from tvgarch.sampler import SamplerConfig, credible_band, rhat_ess_1d
from tvgarch.simulation import SimSpec, simulate

EXIT_OK, EXIT_VALIDATION, EXIT_CONVERGENCE, EXIT_IO = 0, 2, 3, 4
PRIORS = ("inverse-wishart", "horseshoe", "mv-horseshoe")
BAND_FUNCTIONS = ("a_t", "b_t", "c_t", "tau", "mu", "sigma2")
TRUTH_COLUMNS = {"a_t": "a", "b_t": "b", "c_t": "c", "mu": "mu", "sigma2": "sigma2"}


class ConvergenceError(RuntimeError):
    pass


# ---------------------------------------------------------------- data files

def ingest_csv(path) -> TimeSeriesData:
    """Read ``series_id,t,y,<covariates...>``; an empty ``y`` cell marks a missing response.

    Rows of a series need not be adjacent in the file but must have strictly
    increasing ``t`` in file order.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file, header row expected") from None
        if header[:3] != ["series_id", "t", "y"]:
            raise ValueError(f"{path}: header must start with series_id,t,y (got {header[:3]})")
        covs = header[3:]
        rows = []
        for line, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise ValueError(f"{path}:{line}: expected {len(header)} fields, got {len(rec)}")
            rows.append((line, [c.strip() for c in rec]))
    if not rows:
        raise ValueError(f"{path}: no data rows")

    def num(cell, line, col):
        try:
            v = float(cell)
        except ValueError:
            raise ValueError(f"{path}:{line}: non-numeric value {cell!r} in column {col}") from None
        if not math.isfinite(v):
            raise ValueError(f"{path}:{line}: non-finite value in column {col}")
        return v

    order, seen, last_t = [], {}, {}
    parsed = []
    for line, rec in rows:
        sid, t = rec[0], num(rec[1], line, "t")
        if (sid, t) in seen:
            raise ValueError(f"{path}:{line}: duplicate (series_id, t) = ({sid}, {rec[1]}); "
                             f"first seen on line {seen[(sid, t)]}")
        seen[(sid, t)] = line
        if sid in last_t and t < last_t[sid]:
            raise ValueError(f"{path}:{line}: t decreases within series {sid}")
        last_t[sid] = t
        if sid not in order:
            order.append(sid)
        y = float("nan") if rec[2] == "" else num(rec[2], line, "y")
        if rec[2] != "" and not y > 0:
            raise ValueError(f"{path}:{line}: y must be > 0 (got {rec[2]})")
        x = [num(c, line, name) for c, name in zip(rec[3:], covs)]
        parsed.append((order.index(sid), sid, t, y, x))
    parsed.sort(key=lambda r: r[0])  # stable: keeps file order within a series
    y = np.array([r[3] for r in parsed])
    return TimeSeriesData(
        y=y, t=np.array([r[2] for r in parsed]),
        X=np.array([r[4] for r in parsed], dtype=float).reshape(len(parsed), len(covs)),
        series_id=np.array([r[1] for r in parsed], dtype=object),
        missing_mask=np.isnan(y), covariate_names=covs)


def write_data_csv(path, data: TimeSeriesData):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series_id", "t", "y"] + list(data.covariate_names))
        for i in range(data.n):
            yv = "" if data.missing_mask[i] else repr(float(data.y[i]))
            w.writerow([data.series_id[i], _fmt(data.t[i]), yv] + [repr(float(v)) for v in data.X[i]])


def data_checksum(data: TimeSeriesData) -> str:
    """Content hash of the data, independent of how the CSV was formatted."""
    h = hashlib.sha256()
    h.update("\x1f".join(map(str, data.series_id.tolist())).encode())
    for arr in (data.t, np.where(data.missing_mask, 0.0, data.y), data.missing_mask, data.X):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def _fmt(v):
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def write_matrix_csv(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([x if isinstance(x, str) else repr(float(x)) if isinstance(x, float)
                        else x for x in r])


def write_draws_csv(path, draws):
    c, s, _ = draws.values.shape
    rows = ([ci, si] + draws.values[ci, si].tolist() for ci in range(c) for si in range(s))
    write_matrix_csv(path, ["chain", "draw"] + list(draws.names), rows)


def read_draws_csv(path):
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        arr = np.array([[float(v) for v in r] for r in reader])
    chains = arr[:, 0].astype(int)
    nc = chains.max() + 1
    vals = arr[:, 2:].reshape(nc, -1, arr.shape[1] - 2)
    return header[2:], vals


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, PriorFamily):
        return {"tag": o.tag, "psi": o.psi}
    raise TypeError(type(o))


# ---------------------------------------------------------------- configuration

@dataclass
class RunConfig:
    """Resolved settings of one invocation (flags over config file over defaults)."""

    command: str
    out: str | None = None
    data: str | None = None
    kind: str = "joint"
    n: int = 1000
    seed: int = 1
    horizon: float | None = None
    mu0: float = 3.0
    tau0: float = 2.25
    prior: str = "mv-horseshoe"
    prior_a: str | None = None
    prior_b: str | None = None
    prior_c: str | None = None
    prior_tau: str | None = None
    psi: float = 20.0
    m: int = 15
    width_factor: float = 1.0
    tau_smooth: str = "auto"
    mean_lag: str = "log"
    var_lag: str = "logcv"
    arch: str = "abs_centred"
    chains: int = 4
    warmup: int = 1000
    draws: int = 1000
    target_accept: float = 0.9
    max_leapfrog: int = 1024
    path_length: float = 1.0
    truth: str | None = None

    def model_config(self, data: TimeSeriesData) -> ModelConfig:
        def fam(tag):
            tag = tag or self.prior
            if tag not in PRIORS:
                raise ValueError(f"prior must be one of {PRIORS}, got {tag!r}")
            return PriorFamily(tag, self.psi)
        smooth = {"auto": data.n_series > 1, "on": True, "off": False}
        if self.tau_smooth not in smooth:
            raise ValueError("tau_smooth must be auto, on or off")
        return ModelConfig(m=self.m, width_factor=self.width_factor, family_a=fam(self.prior_a),
                           family_b=fam(self.prior_b), family_c=fam(self.prior_c),
                           family_tau=fam(self.prior_tau), tau_smooth=smooth[self.tau_smooth],
                           mean_lag=self.mean_lag, var_lag=self.var_lag, arch=self.arch)

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(chains=self.chains, warmup=self.warmup, draws=self.draws,
                             target_accept=self.target_accept, max_leapfrog=self.max_leapfrog,
                             seed=self.seed, path_length=self.path_length)


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment; dashes and underscores are interchangeable."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    fields = RunConfig.__dataclass_fields__
    values = {}
    if getattr(ns, "config", None):
        for k, v in read_config_file(ns.config).items():
            if k not in fields or k == "command":
                raise ValueError(f"unknown config key {k!r}")
            values[k] = v
    for k, v in vars(ns).items():
        if k in fields and v is not None:
            values[k] = v
    values["command"] = ns.command
    cfg = RunConfig(**{k: _coerce(fields[k].type, v) for k, v in values.items()})
    return cfg


def _coerce(typ, v):
    if not isinstance(v, str):
        return v
    if "int" in typ:
        return int(v)
    if "float" in typ:
        return float(v)
    return v


# ---------------------------------------------------------------- commands

def cmd_simulate(cfg: RunConfig):
    spec = SimSpec(kind=cfg.kind.upper(), n=cfg.n, mu0=cfg.mu0, tau0=cfg.tau0, seed=cfg.seed,
                   horizon=cfg.horizon, mean_lag=cfg.mean_lag, arch=cfg.arch, var_lag=cfg.var_lag)
    data, truth = simulate(spec)
    out = _outdir(cfg.out)
    write_data_csv(out / "data.csv", data)
    cols = ["a", "b", "c", "mu", "sigma2"] + (["f"] if "f" in truth else [])
    write_matrix_csv(out / "truth.csv", ["t"] + cols,
                     ([_fmt(truth["t"][i])] + [float(truth[c][i]) for c in cols]
                      for i in range(data.n)))
    meta = {k: v for k, v in asdict(spec).items() if not k.endswith("_fn") and k != "extra"}
    write_json(out / "meta.json", {"spec": meta, "seed": cfg.seed, "data_checksum": data_checksum(data)})
    return EXIT_OK


def cmd_fit(cfg: RunConfig):
    if not cfg.data:
        raise ValueError("fit needs --data")
    data = ingest_csv(cfg.data)
    mcfg = cfg.model_config(data)
    scfg = cfg.sampler_config()
    out = _outdir(cfg.out)
    res = fit_two_step(data, mcfg, scfg)
    write_draws_csv(out / "draws_step1.csv", res.step1.draws)
    write_draws_csv(out / "draws_step2.csv", res.step2.draws)
    write_trajectories(out / "trajectories.csv", res)
    lres = loo(res.pointwise_loglik())
    checksum = data_checksum(data)
    write_json(out / "loo.json", {**lres.to_dict(), "data_checksum": checksum})
    s1 = res.summary1.state
    summary = {
        "data_checksum": checksum,
        "data_file": str(cfg.data),
        "n": data.n, "n_series": data.n_series, "n_missing": int(data.missing_mask.sum()),
        "config": {k: v for k, v in asdict(cfg).items()},
        "model": asdict(mcfg),
        "converged": res.converged,
        "step1": res.step1.report(),
        "step2": res.step2.report(),
        "posterior_mean": {"mu0": s1.mu0, "beta": dict(zip(data.covariate_names, s1.beta.tolist())),
                           "dispersion": s1.dispersion.tolist(),
                           "tau0": float(res.step2.draws.column("tau0").mean())},
        "looic": lres.looic, "looic_se": 2.0 * lres.se, "n_high_k": lres.n_high_k,
    }
    write_json(out / "summary.json", summary)
    if not res.converged:
        raise ConvergenceError(
            f"R-hat above 1.1 (step 1 max {res.step1.max_rhat:.3f}, step 2 max "
            f"{res.step2.max_rhat:.3f}); outputs written to {out}")
    return EXIT_OK


def write_trajectories(path, res):
    data = res.data
    cols, bands = [], []
    for name in BAND_FUNCTIONS:
        try:
            tr = res.trajectory_draws(name)
        except KeyError:
            continue
        cols += [f"{name}_lower", f"{name}_median", f"{name}_upper"]
        bands.extend(credible_band(tr))
    rows = ([str(data.series_id[i]), _fmt(data.t[i])] + [float(b[i]) for b in bands]
            for i in range(data.n))
    write_matrix_csv(path, ["series_id", "t"] + cols, rows)


def read_csv_columns(path):
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    return {k: [r[k] for r in rows] for k in reader.fieldnames}


def cmd_compare(cfg: RunConfig, run_dirs):
    if len(run_dirs) < 2:
        raise ValueError("compare needs at least two run directories")
    results, checksums = {}, {}
    for d in run_dirs:
        info = json.loads((Path(d) / "loo.json").read_text())
        checksums[d] = info["data_checksum"]
        results[str(d)] = LooResult(elpd_loo=info["elpd_loo"], looic=info["looic"], se=info["se"],
                                    pareto_k=np.array(info["pareto_k"]), n_high_k=info["n_high_k"],
                                    pointwise=np.array(info["elpd_pointwise"]))
    if len(set(checksums.values())) != 1:
        raise ValueError(f"runs were fitted to different data: {checksums}")
    report = compare_loo(results)
    report["data_checksum"] = next(iter(checksums.values()))
    if cfg.out:
        Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
        write_json(cfg.out, report)
    else:
        print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_diagnose(cfg: RunConfig, run_dir):
    run_dir = Path(run_dir)
    report = {}
    worst = 1.0
    for step in ("step1", "step2"):
        names, vals = read_draws_csv(run_dir / f"draws_{step}.csv")
        per = {}
        for k, name in enumerate(names):
            r, e, deg = rhat_ess_1d(vals[..., k])
            per[name] = {"rhat": r, "ess": e, "degenerate": deg}
            if not deg:
                worst = max(worst, r)
        report[step] = {"max_rhat": max((v["rhat"] for v in per.values() if not v["degenerate"]),
                                        default=1.0),
                        "min_ess": min((v["ess"] for v in per.values() if not v["degenerate"]),
                                       default=float("nan")),
                        "parameters": per}
    info = json.loads((run_dir / "loo.json").read_text())
    k = np.array(info["pareto_k"])
    report["psis"] = {"looic": info["looic"], "looic_se": info["looic_se"],
                      "n_high_k": int(np.sum(k > 0.7)), "max_k": float(k.max()),
                      "high_k_index": np.where(k > 0.7)[0].tolist()}
    report["converged"] = worst <= 1.1
    write_json(run_dir / "diagnostics.json", report)
    print(f"max R-hat {worst:.4f}; Pareto k > 0.7 at {report['psis']['n_high_k']} observations")
    return EXIT_OK if report["converged"] else EXIT_CONVERGENCE


def cmd_plotdata(cfg: RunConfig, run_dir):
    """Long-format bands (optionally with truth) for overlay plots of each function."""
    run_dir = Path(run_dir)
    tr = read_csv_columns(run_dir / "trajectories.csv")
    truth = read_csv_columns(cfg.truth) if cfg.truth else None
    rows = []
    for name in BAND_FUNCTIONS:
        if f"{name}_median" not in tr:
            continue
        for i in range(len(tr["t"])):
            tv = ""
            if truth is not None and TRUTH_COLUMNS.get(name) in truth:
                tv = truth[TRUTH_COLUMNS[name]][i]
            rows.append([name, tr["series_id"][i], tr["t"][i], tr[f"{name}_lower"][i],
                         tr[f"{name}_median"][i], tr[f"{name}_upper"][i], tv])
    out = Path(cfg.out) if cfg.out else run_dir / "plotdata.csv"
    write_matrix_csv(out, ["function", "series_id", "t", "lower", "median", "upper", "truth"], rows)
    return EXIT_OK


def _outdir(path):
    if not path:
        raise ValueError("--out is required")
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ---------------------------------------------------------------- argument parsing

def build_parser():
    p = argparse.ArgumentParser(prog="tvgarch", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat key = value file; flags override it")
        sp.add_argument("--out")
        sp.add_argument("--seed", type=int)

    def recursion(sp):
        sp.add_argument("--mean-lag", dest="mean_lag", choices=["log", "raw"])
        sp.add_argument("--var-lag", dest="var_lag", choices=sorted(VAR_LAG_MODES))
        sp.add_argument("--arch", choices=sorted(ARCH_MODES))

    sp = sub.add_parser("simulate", help="write a synthetic data set")
    common(sp)
    recursion(sp)
    sp.add_argument("--kind", type=str.lower,
                    choices=["tvar1", "tvarch1", "tvgarch01", "joint"])
    sp.add_argument("--n", type=int)
    sp.add_argument("--horizon", type=float)
    sp.add_argument("--mu0", type=float)
    sp.add_argument("--tau0", type=float)

    sp = sub.add_parser("fit", help="two-step fit of one data file")
    common(sp)
    recursion(sp)
    sp.add_argument("--data")
    for flag in ("prior", "prior-a", "prior-b", "prior-c", "prior-tau"):
        sp.add_argument(f"--{flag}", dest=flag.replace("-", "_"), choices=PRIORS)
    sp.add_argument("--psi", type=float)
    sp.add_argument("--m", type=int)
    sp.add_argument("--width-factor", dest="width_factor", type=float)
    sp.add_argument("--tau-smooth", dest="tau_smooth", choices=["auto", "on", "off"])
    sp.add_argument("--chains", type=int)
    sp.add_argument("--warmup", type=int)
    sp.add_argument("--draws", type=int)
    sp.add_argument("--target-accept", dest="target_accept", type=float)
    sp.add_argument("--max-leapfrog", dest="max_leapfrog", type=int)
    sp.add_argument("--path-length", dest="path_length", type=float)

    sp = sub.add_parser("compare", help="LOOIC comparison of completed fits")
    sp.add_argument("runs", nargs="+")
    sp.add_argument("--out")
    sp.add_argument("--config")

    sp = sub.add_parser("diagnose", help="recompute R-hat, ESS and PSIS summaries of a fit")
    sp.add_argument("run")
    sp.add_argument("--config")

    sp = sub.add_parser("plotdata", help="long-format bands for plotting")
    sp.add_argument("run")
    sp.add_argument("--truth")
    sp.add_argument("--out")
    sp.add_argument("--config")
    return p


def main(argv=None):
    ns = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(ns)
        if ns.command == "simulate":
            return cmd_simulate(cfg)
        if ns.command == "fit":
            return cmd_fit(cfg)
        if ns.command == "compare":
            return cmd_compare(cfg, ns.runs)
        if ns.command == "diagnose":
            return cmd_diagnose(cfg, ns.run)
        return cmd_plotdata(cfg, ns.run)
    except ConvergenceError as e:
        print(f"tvgarch: convergence failure: {e}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (FileNotFoundError, PermissionError, IsADirectoryError) as e:
        print(f"tvgarch: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, OverflowError, KeyError) as e:
        print(f"tvgarch: invalid input: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"tvgarch: I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

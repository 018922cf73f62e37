"""Command-line driver: ``yfwl --data file.csv --outcome y ...``.

Exit status is 0 on success (including expected-failure demonstrations),
2 for configuration or validation errors and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import traceback
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import covariance as cov
from . import engine
from . import estimators as est
from .errors import NumericalError, ValidationError, YFWLError
from .model import INTERCEPT_NAME, ModelSpec, ingest_csv, validate
from .simulate import EndogenousConditioning

SCHEMA = "yfwl-report/1"
ESTIMATORS = ("ols", "iv", "2sls", "kclass", "liml", "fuller", "igmm", "2sgmm")
VCOVS = ("homo", "hc0", "hc1", "hc2", "hc3", "hc4", "hc5", "hac", "cluster-cv1")
MODES = ("full", "partial", "compare", "limitation-demo", "sweep")
SWEEP_SIZES = (50, 200, 1000, 5000)
SWEEP_REPLICATIONS = 20

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


def _csv_list(text: str) -> tuple[str, ...]:
    return tuple(s.strip() for s in text.split(",") if s.strip())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="yfwl", description="Full versus partialled linear IV estimation.")
    p.add_argument("--data", metavar="PATH")
    p.add_argument("--outcome", metavar="NAME")
    p.add_argument("--endogenous", type=_csv_list, default=(), metavar="CSV-LIST")
    p.add_argument("--exogenous", type=_csv_list, default=(), metavar="CSV-LIST")
    p.add_argument("--instruments", type=_csv_list, default=(), metavar="CSV-LIST")
    p.add_argument("--cluster", metavar="NAME")
    p.add_argument("--estimator", choices=ESTIMATORS, required=True)
    p.add_argument("--kappa", type=float, metavar="REAL")
    p.add_argument("--fuller-alpha", type=float, metavar="REAL")
    p.add_argument("--vcov", choices=VCOVS)
    p.add_argument("--hac-lags", type=int, metavar="INT")
    p.add_argument("--mode", choices=MODES, default="full")
    p.add_argument("--tolerance", type=float, default=1e-8, metavar="REAL")
    p.add_argument("--no-intercept", action="store_true")
    p.add_argument("--drop-missing", action="store_true")
    p.add_argument("--format", choices=("json", "table"), default="json")
    p.add_argument("--seed", type=int, metavar="INT")
    return p


@dataclass(frozen=True)
class RunConfig:
    data_path: str | None
    outcome: str | None
    endogenous: tuple[str, ...]
    exogenous: tuple[str, ...]
    instruments: tuple[str, ...]
    cluster: str | None
    estimator: str
    kappa: float | None
    fuller_alpha: float | None
    vcov: str | None
    hac_lags: int | None
    mode: str
    tolerance: float
    intercept: bool
    drop_missing: bool
    output_format: str
    seed: int | None

    @classmethod
    def from_args(cls, ns: argparse.Namespace) -> "RunConfig":
        cfg = cls(
            ns.data, ns.outcome, tuple(ns.endogenous), tuple(ns.exogenous), tuple(ns.instruments),
            ns.cluster, ns.estimator, ns.kappa, ns.fuller_alpha, ns.vcov, ns.hac_lags, ns.mode,
            ns.tolerance, not ns.no_intercept, ns.drop_missing, ns.format, ns.seed,
        )
        cfg.check()
        return cfg

    def check(self) -> None:
        if self.hac_lags is not None and self.vcov != "hac":
            raise ValidationError("--hac-lags is only valid with --vcov hac")
        if self.vcov == "hac" and self.hac_lags is None:
            raise ValidationError("--vcov hac needs --hac-lags")
        if self.vcov == "cluster-cv1" and self.cluster is None:
            raise ValidationError("--vcov cluster-cv1 needs --cluster")
        if (self.kappa is None) == (self.estimator == "kclass"):
            raise ValidationError("--kappa is required with, and only valid with, --estimator kclass")
        if self.fuller_alpha is not None and self.estimator != "fuller":
            raise ValidationError("--fuller-alpha is only valid with --estimator fuller")
        if not self.tolerance > 0:
            raise ValidationError("--tolerance must be positive")
        if self.vcov is not None and self.estimator not in engine.VCOV_ESTIMATORS:
            raise ValidationError(f"--vcov is available for {', '.join(sorted(engine.VCOV_ESTIMATORS))} only")
        if self.vcov is not None and self.mode in ("limitation-demo", "sweep"):
            raise ValidationError(f"--vcov is not used in {self.mode} mode")
        if self.mode == "sweep":
            if self.estimator not in ("liml", "fuller", "kclass", "2sls", "ols"):
                raise ValidationError("sweep mode supports K-class estimators")
            return
        if self.seed is not None:
            raise ValidationError("--seed is only valid in sweep mode")
        if not self.data_path or not self.outcome:
            raise ValidationError("--data and --outcome are required")
        if self.mode == "limitation-demo":
            if not self.endogenous or not self.instruments:
                raise ValidationError("limitation-demo needs --endogenous (conditioning) and --instruments")
            return
        if not self.endogenous:
            raise ValidationError("--endogenous must name at least one regressor of interest")
        if self.estimator != "ols" and not self.instruments:
            raise ValidationError(f"--estimator {self.estimator} needs --instruments")

    def params(self) -> dict:
        if self.estimator == "kclass":
            return {"K": self.kappa}
        if self.estimator == "fuller" and self.fuller_alpha is not None:
            return {"alpha": self.fuller_alpha}
        return {}

    def cov_spec(self) -> cov.CovSpec | None:
        if self.vcov is None:
            return None
        return cov.CovSpec(self.vcov, hac_lags=self.hac_lags)

    def echo(self) -> dict:
        return {
            "data": self.data_path,
            "outcome": self.outcome,
            "endogenous": list(self.endogenous),
            "exogenous": list(self.exogenous),
            "instruments": list(self.instruments),
            "cluster": self.cluster,
            "estimator": self.estimator,
            "kappa": self.kappa,
            "fuller_alpha": self.fuller_alpha,
            "vcov": self.vcov,
            "hac_lags": self.hac_lags,
            "mode": self.mode,
            "tolerance": self.tolerance,
            "intercept": self.intercept,
            "drop_missing": self.drop_missing,
            "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    s = format(x, ".17g")
    return s if any(c in s for c in ".en") else s + ".0"


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with insertion-ordered keys and floats printed with 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        items = [pad + dumps(v, indent, _level + 1) for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _coef_block(names, values, vcov: cov.VcovResult | None = None):
    se = None if vcov is None else vcov.std_errors
    out = []
    for j, (n, v) in enumerate(zip(names, values)):
        row = {"name": n, "estimate": float(v)}
        if se is not None:
            row["se"] = float(se[j])
        out.append(row)
    return out


def _residual_summary(u: np.ndarray) -> dict:
    return {
        "n": int(u.shape[0]),
        "ssr": float(u @ u),
        "mean": float(u.mean()),
        "min": float(u.min()),
        "max": float(u.max()),
    }


def _fit_entry(fit: est.FitResult, vcov: cov.VcovResult | None = None) -> dict:
    entry = {
        "form": fit.form,
        "estimator": fit.estimator,
        "coefficients": _coef_block(fit.names, fit.coefficients, vcov),
        "residual_summary": _residual_summary(fit.residuals),
    }
    if vcov is not None:
        entry["vcov"] = {"kind": vcov.kind, "df_factor_applied": vcov.df_factor_applied,
                         "leverage_source": vcov.leverage_source}
    return entry


def _diagnostics(fits, dropped: int) -> dict:
    d = {}
    for f in fits:
        if "kappa" in f.params:
            d[f"kappa_{f.form}"] = f.params["kappa"]
        if "K" in f.params:
            d[f"K_{f.form}"] = f.params["K"]
        if "L" in f.params:
            d[f"L_{f.form}"] = f.params["L"]
    d["dropped_rows"] = dropped
    return d


# ---------------------------------------------------------------------------
# modes
# ---------------------------------------------------------------------------


def _load(cfg: RunConfig, names: Sequence[str]):
    labels = (cfg.cluster,) if cfg.cluster else ()
    cols = [c for c in dict.fromkeys(names) if c not in labels]
    return ingest_csv(cfg.data_path, columns=cols, label_columns=labels, drop_missing=cfg.drop_missing)


def _design(cfg: RunConfig):
    instruments = () if cfg.estimator == "ols" else cfg.instruments
    names = [cfg.outcome, *cfg.endogenous, *cfg.exogenous, *instruments]
    data = _load(cfg, names)
    spec = ModelSpec(cfg.outcome, cfg.endogenous, cfg.exogenous, instruments, cfg.intercept, cfg.cluster)
    return validate(spec, data), data.dropped_rows


def _run_single(cfg: RunConfig, report: dict) -> None:
    design, dropped = _design(cfg)
    spec = cfg.cov_spec()
    if cfg.mode == "full":
        fit = est.fit(design, cfg.estimator, **cfg.params())
        v = cov.sandwich_full(design, fit, spec) if spec else None
    else:
        fit = est.fit(design.partialled(), cfg.estimator, **cfg.params())
        if spec is None:
            v = None
        elif spec.needs_leverages:
            v = cov.partial_inference_hc2_family(design, spec, fit)
        else:
            v = cov.sandwich_partial(design, fit, spec)
    report["fits"] = [_fit_entry(fit, v)]
    report["diagnostics"] = _diagnostics([fit], dropped)


def _run_compare(cfg: RunConfig, report: dict) -> None:
    design, dropped = _design(cfg)
    spec = cfg.cov_spec()
    rep = engine.compare(design, cfg.estimator, cfg.params(), [spec] if spec else [], cfg.tolerance)
    vf = rep.vcov_full[0] if rep.vcov_full else None
    vp = rep.vcov_partial[0] if rep.vcov_partial else None
    report["fits"] = [_fit_entry(rep.fit_full, vf), _fit_entry(rep.fit_partial, vp)]
    report["comparison"] = {
        "names": list(rep.names_b2),
        "coef_full_b2": [float(x) for x in rep.coef_full_b2],
        "coef_partial": [float(x) for x in rep.coef_partial],
        "deltas": {
            "max_abs_coef": rep.max_abs_coef_delta,
            "max_rel_coef": rep.max_rel_coef_delta,
            "max_abs_resid": rep.max_abs_resid_delta,
            "max_rel_resid": rep.max_rel_resid_delta,
        },
        "df_factors": {c.kind: c.df_factor for c in rep.vcov_checks},
        "vcov_checks": [
            {
                "kind": c.kind,
                "df_factor": c.df_factor,
                "max_rel_delta": c.max_rel_delta,
                "verdict": "pass" if c.verdict else "fail",
                "leverage_source": c.leverage_source,
                "partial_leverage_rel_delta": c.partial_leverage_rel_delta,
            }
            for c in rep.vcov_checks
        ],
        "verdicts": {
            "coefficients": "pass" if rep.coef_verdict else "fail",
            "residuals": "pass" if rep.resid_verdict else "fail",
            "overall": "pass" if rep.verdict else "fail",
        },
        "expected_failure": rep.expected_failure,
        "partition_case": rep.partition_case.tag.value,
        "tolerance": rep.tolerance,
    }
    report["diagnostics"] = _diagnostics([rep.fit_full, rep.fit_partial], dropped)


def _run_limitation(cfg: RunConfig, report: dict) -> None:
    # Roles swapped: --endogenous is the conditioning block, --exogenous the block of interest.
    names = [cfg.outcome, *cfg.endogenous, *cfg.exogenous, *cfg.instruments]
    data = _load(cfg, names)
    W2 = data.columns(cfg.exogenous)
    names_W2 = list(cfg.exogenous)
    if cfg.intercept:
        W2 = np.column_stack([np.ones(data.n_obs), W2])
        names_W2 = [INTERCEPT_NAME, *names_W2]
    if W2.shape[1] == 0:
        raise ValidationError("limitation-demo needs an exogenous block of interest")
    ec = EndogenousConditioning(data.column(cfg.outcome), data.columns(cfg.endogenous), W2,
                                data.columns(cfg.instruments))
    demo = engine.limitation_demo(ec)
    report["limitation"] = {
        "names": names_W2,
        "b2_full": [float(x) for x in demo.b2_full],
        "b2_partial_ols": [float(x) for x in demo.b2_partial_ols],
        "b2_partial_iv": None if demo.b2_partial_iv is None else [float(x) for x in demo.b2_partial_iv],
        "delta_full_vs_partial_ols": demo.delta_partial_ols,
        "delta_full_vs_partial_iv": demo.delta_partial_iv,
        "partial_iv_error": demo.partial_iv_error,
    }
    report["diagnostics"] = {"dropped_rows": data.dropped_rows}


def _run_sweep(cfg: RunConfig, report: dict) -> None:
    seed = 0 if cfg.seed is None else cfg.seed
    rows = engine.convergence_sweep(seed, SWEEP_SIZES, cfg.estimator, SWEEP_REPLICATIONS, cfg.params())
    report["sweep"] = {
        "seed": seed,
        "replications": SWEEP_REPLICATIONS,
        "rows": [
            {"N": r.N, "mean_abs_delta": r.mean_abs_delta, "max_abs_delta": r.max_abs_delta,
             "mean_kappa": r.mean_kappa, "mean_K_full": r.mean_K_full, "mean_K_partial": r.mean_K_partial}
            for r in rows
        ],
    }
    report["diagnostics"] = {"dropped_rows": 0}


def run(cfg: RunConfig) -> dict:
    report = {"schema": SCHEMA, "config": cfg.echo()}
    if cfg.mode in ("full", "partial"):
        _run_single(cfg, report)
    elif cfg.mode == "compare":
        _run_compare(cfg, report)
    elif cfg.mode == "limitation-demo":
        _run_limitation(cfg, report)
    else:
        _run_sweep(cfg, report)
    return report


# ---------------------------------------------------------------------------
# table rendering (works on the parsed JSON so both outputs agree)
# ---------------------------------------------------------------------------


def _num(x) -> str:
    return "-" if x is None else format(x, ".10g")


def _rows_to_text(header, rows) -> list[str]:
    widths = [max(len(str(h)), *(len(str(r[j])) for r in rows)) if rows else len(str(h)) for j, h in enumerate(header)]
    fmt = "  ".join(f"{{:<{w}}}" if j == 0 else f"{{:>{w}}}" for j, w in enumerate(widths))
    return [fmt.format(*header), fmt.format(*("-" * w for w in widths))] + [fmt.format(*r) for r in rows]


def render_table(report: dict) -> str:
    cfg = report["config"]
    lines = [f"{report['schema']}  mode={cfg['mode']}  estimator={cfg['estimator']}"]
    for fit in report.get("fits", []):
        has_se = any("se" in c for c in fit["coefficients"])
        header = ["name", "estimate"] + (["se"] if has_se else [])
        rows = [[c["name"], _num(c["estimate"])] + ([_num(c.get("se"))] if has_se else []) for c in fit["coefficients"]]
        lines += ["", f"[{fit['form']}] {fit['estimator']}  N={fit['residual_summary']['n']}"]
        lines += _rows_to_text(header, rows)
    if "comparison" in report:
        c = report["comparison"]
        rows = [[n, _num(a), _num(b)] for n, a, b in zip(c["names"], c["coef_full_b2"], c["coef_partial"])]
        lines += ["", "[comparison]"] + _rows_to_text(["name", "full", "partial"], rows)
        d = c["deltas"]
        lines.append(f"max |coef delta| = {_num(d['max_abs_coef'])}  max |resid delta| = {_num(d['max_abs_resid'])}")
        for v in c["vcov_checks"]:
            lines.append(f"vcov {v['kind']}: df factor {_num(v['df_factor'])}  rel delta {_num(v['max_rel_delta'])}  {v['verdict']}")
        lines.append(f"verdict: {c['verdicts']['overall']}" + ("  (expected failure)" if c["expected_failure"] else ""))
    if "limitation" in report:
        lim = report["limitation"]
        iv = lim["b2_partial_iv"] or [None] * len(lim["names"])
        rows = [[n, _num(a), _num(b), _num(c)] for n, a, b, c in zip(lim["names"], lim["b2_full"], lim["b2_partial_ols"], iv)]
        lines += ["", "[limitation]"] + _rows_to_text(["name", "full", "partial_ols", "partial_iv"], rows)
    if "sweep" in report:
        rows = [[r["N"], _num(r["mean_abs_delta"]), _num(r["mean_kappa"])] for r in report["sweep"]["rows"]]
        lines += ["", "[sweep]"] + _rows_to_text(["N", "mean |delta|", "mean kappa"], rows)
    diag = report.get("diagnostics", {})
    if diag:
        lines += ["", "  ".join(f"{k}={_num(v) if isinstance(v, float) else v}" for k, v in diag.items())]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _origin(exc: BaseException) -> str:
    """Innermost package module that raised ``exc``, e.g. ``estimators``."""
    origin = "cli"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        mod = frame.f_globals.get("__name__", "")
        if mod.startswith("yfwl.") and mod != "yfwl.errors":
            origin = mod.split(".", 1)[1].lstrip("_")
    return origin


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = RunConfig.from_args(ns)
        report = run(cfg)
    except ValidationError as exc:
        print(f"yfwl: error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"yfwl: numerical error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, UnicodeDecodeError) as exc:
        print(f"yfwl: error [model]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except YFWLError as exc:  # pragma: no cover - every error is one of the two families
        print(f"yfwl: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    text = dumps(report) + "\n"
    sys.stdout.write(render_table(json.loads(text)) if cfg.output_format == "table" else text)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

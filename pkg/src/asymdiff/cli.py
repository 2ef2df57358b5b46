"""Operator surface: data generation, training, evaluation, ablation sweeps,
reporting, and a serving-latency micro-benchmark.

Every subcommand resolves its config fully (defaults filled in), writes the
resolved form next to its outputs, and stamps the config hash plus code
version into everything it emits. Exit codes: 0 success, 1 usage/config
error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np
import yaml

from . import arms as A
from . import data as D
from . import model as M
from . import training as T
from .bench import serving_overhead
from .errors import ConfigError, DataError, EngineError
from .metrics import CSV_COLUMNS, MetricsReport, evaluate_scores, auc, relaimpr
from .version import __version__

DEFAULT_ABLATION_ARMS = ["base", "asymdiff", "asymdiff_wo_recon", "asymdiff_wo_aux"]


# ---------------------------------------------------------------------------
# Config plumbing
# ---------------------------------------------------------------------------

def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def config_hash(doc) -> str:
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()


def load_yaml(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except IsADirectoryError:
        raise ConfigError(f"{path}: is a directory")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: invalid YAML: {err}")
    doc = doc if doc is not None else {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return doc


def from_dict(cls, d: dict, where: str):
    """Dataclass from a config section; unknown keys are an error, not a typo sink."""
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: must be a mapping")
    extra = sorted(set(d) - set(cls.__dataclass_fields__))
    if extra:
        raise ConfigError(f"{where}: unknown fields {extra}")
    try:
        return cls(**d)
    except TypeError as err:
        raise ConfigError(f"{where}: {err}")


def _check_keys(doc: dict, allowed: set, where: str) -> None:
    extra = sorted(set(doc) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown fields {extra}")


def parse_model_config(doc: dict) -> M.ModelConfig:
    if "lambda_recon" in doc or "lambda_aux" in doc:
        raise ConfigError("model: loss weights lambda_recon/lambda_aux belong to the arm block")
    return from_dict(M.ModelConfig, doc, "model")


def parse_arm(doc) -> A.ArmSpec:
    if isinstance(doc, str):
        return A.ArmSpec.make(doc)
    if not isinstance(doc, dict) or "name" not in doc:
        raise ConfigError("arm: expected an arm name or a mapping with a 'name' field")
    _check_keys(doc, {"name", "lambda_recon", "lambda_aux", "schedule"}, "arm")
    sched = None
    sdoc = doc.get("schedule")
    if sdoc is not None:
        _check_keys(sdoc, {"betas", "n_steps", "beta_start", "beta_end"}, "arm.schedule")
        if "betas" in sdoc:
            sched = A.GaussSchedule(tuple(sdoc["betas"]))
        else:
            sched = A.GaussSchedule.linear(
                n_steps=sdoc.get("n_steps", 10),
                beta_start=sdoc.get("beta_start", 1e-4),
                beta_end=sdoc.get("beta_end", 0.1),
            )
    return A.ArmSpec.make(
        doc["name"],
        lambda_recon=doc.get("lambda_recon", 1.0),
        lambda_aux=doc.get("lambda_aux", 1.0),
        schedule=sched,
    )


def load_bundle(data_doc: dict) -> tuple[D.DatasetBundle, dict]:
    """Dataset from a config 'data' section; returns (bundle, resolved echo)."""
    _check_keys(data_doc, {"synth", "train_csv", "eval_csv", "sidecar", "eval_frac", "split_seed"}, "data")
    if "synth" in data_doc:
        spec = D.SynthSpec.from_dict(data_doc["synth"] or {})
        return D.generate(spec), {"synth": spec.to_dict()}
    if "train_csv" not in data_doc:
        raise ConfigError("data: need either a 'synth' spec or a 'train_csv' path")
    schema = truth = spec = None
    sidecar = data_doc.get("sidecar")
    if sidecar:
        spec, schema, truth, _ = D.read_sidecar(sidecar)
    train_set, schema, rep = D.read_csv(data_doc["train_csv"], schema=schema)
    for line in rep.rejects:
        click.echo(f"warning: {data_doc['train_csv']}: rejected {line}", err=True)
    resolved = {
        "train_csv": str(data_doc["train_csv"]),
        "eval_csv": str(data_doc["eval_csv"]) if data_doc.get("eval_csv") else None,
        "sidecar": str(sidecar) if sidecar else None,
        "eval_frac": float(data_doc.get("eval_frac", 0.2)),
        "split_seed": int(data_doc.get("split_seed", 0)),
    }
    if data_doc.get("eval_csv"):
        eval_set, _, rep2 = D.read_csv(data_doc["eval_csv"], schema=schema)
        for line in rep2.rejects:
            click.echo(f"warning: {data_doc['eval_csv']}: rejected {line}", err=True)
    else:
        rng = np.random.default_rng(resolved["split_seed"])
        train_set, eval_set = D.split_by_user(train_set, resolved["eval_frac"], rng)
    bundle = D.DatasetBundle(train=train_set, eval=eval_set, schema=schema, truth=truth, spec=spec)
    return bundle, resolved


def write_resolved(out_dir: Path, resolved: dict) -> str:
    h = config_hash(resolved)
    doc = {"config": resolved, "config_hash": h, "code_version": __version__}
    (out_dir / "resolved_config.json").write_text(
        json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )
    return h


def _serving_for(arm_name: str) -> str:
    return "serve_predict" if arm_name.startswith("asymdiff") else "base_predict"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="asymdiff")
def cli():
    """Tabular ranking with feature-dropout diffusion: train, evaluate, sweep."""


@cli.command("gen-data")
@click.option("--spec", "spec_path", type=click.Path(), default=None,
              help="YAML mapping of generator fields; defaults used when omitted.")
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="Override the generator seed.")
def gen_data(spec_path, out_dir, seed):
    """Generate train.csv, eval.csv, and the provenance sidecar dataset.json."""
    doc = load_yaml(spec_path) if spec_path else {}
    if seed is not None:
        doc["seed"] = seed
    spec = D.SynthSpec.from_dict(doc)
    bundle = D.generate(spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h = write_resolved(out, {"command": "gen-data", "spec": spec.to_dict()})
    prov = {"config_hash": h, "code_version": __version__, "seed": spec.seed}
    D.write_csv(out / "train.csv", bundle.train, bundle.schema, provenance=prov)
    D.write_csv(out / "eval.csv", bundle.eval, bundle.schema, provenance=prov)
    D.write_sidecar(out / "dataset.json", spec, bundle.schema, bundle.truth,
                    extra={"config_hash": h, "code_version": __version__,
                           "oracle_auc": A.bundle_oracle_auc(bundle)})
    click.echo(f"wrote {out}/train.csv ({len(bundle.train)} rows) and eval.csv "
               f"({len(bundle.eval)} rows); config_hash={h}")


def _final_eval(arm: A.ArmSpec, params: M.ModelParams, bundle: D.DatasetBundle) -> dict:
    scores = (T.serve_scores if arm.serving_path == "serve_predict" else T.base_scores)(
        params, bundle.eval
    )
    return evaluate_scores(bundle.eval.users, bundle.eval.labels, scores)


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--resume", "resume_path", type=click.Path(), default=None,
              help="Continue from an existing checkpoint (step counter resumes).")
@click.option("--out-dir", type=click.Path(), default=None, help="Override the config's out_dir.")
def train(config_path, resume_path, out_dir):
    """Train one arm: checkpoint.bin, run_log.jsonl, resolved_config.json."""
    doc = load_yaml(config_path)
    _check_keys(doc, {"data", "model", "train", "arm", "out_dir", "seed"}, "config")
    model_cfg = parse_model_config(doc.get("model", {}) or {})
    train_cfg = from_dict(T.TrainConfig, doc.get("train", {}) or {}, "train")
    if "seed" in doc:
        train_cfg = dataclasses.replace(train_cfg, seed=int(doc["seed"]))
    arm = parse_arm(doc.get("arm", "asymdiff"))
    bundle, data_resolved = load_bundle(doc.get("data", {}) or {})

    out = Path(out_dir or doc.get("out_dir") or ".")
    out.mkdir(parents=True, exist_ok=True)
    resolved = {
        "command": "train",
        "data": data_resolved,
        "model": dataclasses.asdict(arm.model_config(model_cfg)),
        "train": dataclasses.asdict(train_cfg),
        "arm": arm.to_dict(),
    }
    h = write_resolved(out, resolved)
    log_path = out / "run_log.jsonl"
    log_path.unlink(missing_ok=True)
    log = T.RunLog(path=log_path)
    log.emit("start", arm=arm.name, seed=train_cfg.seed, config_hash=h,
             code_version=__version__, n_train=len(bundle.train), n_eval=len(bundle.eval),
             lambda_recon=arm.lambda_recon, lambda_aux=arm.lambda_aux)

    if resume_path:
        params, opt, meta = M.load_checkpoint(resume_path)
        if params.schema_hash != bundle.schema.hash():
            raise DataError("resume checkpoint schema differs from the dataset schema")
        step_fn = (A.make_gauss_step(arm.schedule, arm.lambda_recon)
                   if arm.name == "gauss_diff" else T.train_step)
        trainer = T.Trainer(params, train_cfg, log=log, step_fn=step_fn, opt=opt,
                            start_step=int(meta.get("step", opt.t if opt else 0)))
        trainer.run(bundle.train)
    else:
        params, trainer = A.train_arm(arm, bundle.train, bundle.schema, train_cfg.seed,
                                      model_cfg, train_cfg, log=log)

    final = _final_eval(arm, params, bundle) if len(bundle.eval) else {}
    if final:
        log.emit("final_eval", step=trainer.step, **final)
    meta = {"arm": arm.name, "serving_path": arm.serving_path, "seed": train_cfg.seed,
            "config_hash": h, "code_version": __version__, "step": trainer.step}
    M.save_checkpoint(out / "checkpoint.bin", params, opt_state=trainer.opt, meta=meta)
    tail = f" eval_auc={final['auc']:.5f} eval_uauc={final['uauc']:.5f}" if final else ""
    click.echo(f"trained arm={arm.name} steps={trainer.step}{tail} config_hash={h}")
    click.echo(f"checkpoint: {out / 'checkpoint.bin'}")


@cli.command()
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path())
@click.option("--data", "data_path", required=True, type=click.Path(), help="Evaluation CSV.")
@click.option("--sidecar", "sidecar_path", type=click.Path(), default=None,
              help="dataset.json from gen-data; enables the generator-oracle AUC check.")
@click.option("--baseline", "baseline_path", type=click.Path(), default=None,
              help="Baseline report JSON; fills the relative-improvement fields.")
@click.option("--serving", type=click.Choice(["auto", "serve", "base"]), default="auto",
              help="Force a serving path instead of the checkpoint's own.")
@click.option("--out", "out_path", type=click.Path(), default=None)
def evaluate(checkpoint_path, data_path, sidecar_path, baseline_path, serving, out_path):
    """Score a checkpoint on a dataset and emit a metrics report (JSON)."""
    params, _, meta = M.load_checkpoint(checkpoint_path)
    schema_hash = params.schema_hash
    truth = None
    oracle = None
    if sidecar_path:
        _, sc_schema, truth, sc_doc = D.read_sidecar(sidecar_path)
        if sc_schema.hash() != schema_hash:
            raise DataError("sidecar schema differs from the checkpoint schema")
        oracle = sc_doc.get("oracle_auc")
    eval_set, _, rep = D.read_csv(data_path, schema=params.schema)
    for line in rep.rejects:
        click.echo(f"warning: {data_path}: rejected {line}", err=True)

    arm_name = meta.get("arm", "asymdiff")
    if serving == "auto":
        serving_path = meta.get("serving_path") or _serving_for(arm_name)
    else:
        serving_path = "serve_predict" if serving == "serve" else "base_predict"
    scorer = T.serve_scores if serving_path == "serve_predict" else T.base_scores
    scores = scorer(params, eval_set)
    fields = evaluate_scores(eval_set.users, eval_set.labels, scores)
    if oracle is None and truth is not None:
        # older sidecars carry no stored ceiling; fall back to scoring the
        # masked rows with the generator weights (observed slots only)
        oracle = auc(eval_set.labels, truth.score_tokens(eval_set.tokens))

    resolved = {"command": "evaluate", "checkpoint": str(checkpoint_path),
                "data": str(data_path), "sidecar": str(sidecar_path) if sidecar_path else None,
                "baseline": str(baseline_path) if baseline_path else None,
                "serving": serving_path}
    h = config_hash(resolved)
    report = MetricsReport(arm=arm_name, seed=int(meta.get("seed", -1)),
                           serving_path=serving_path, config_hash=h,
                           oracle_auc=oracle, **fields)
    if baseline_path:
        base_rep = MetricsReport.from_json(Path(baseline_path).read_text(encoding="utf-8"))
        report = report.with_baseline(base_rep.arm, base_rep.auc, base_rep.uauc)
    if oracle is not None and report.auc >= oracle:
        click.echo(f"warning: model auc {report.auc:.5f} >= generator-oracle auc "
                   f"{oracle:.5f}; check for leakage", err=True)
    text = report.to_json()
    if out_path:
        Path(out_path).write_text(text + "\n", encoding="utf-8")
        Path(str(out_path) + ".config.json").write_text(
            json.dumps({"config": resolved, "config_hash": h, "code_version": __version__},
                       sort_keys=True, indent=1) + "\n", encoding="utf-8")
    click.echo(text)


def _ablate_task(payload: dict) -> list[dict]:
    """One (arm, seed) cell: train once, evaluate at every requested rho.

    Top-level so process pools can pickle it; rebuilds the dataset from the
    spec, which is pure given the seed.
    """
    spec = D.SynthSpec.from_dict(payload["spec"])
    arm = parse_arm(payload["arm"])
    model_cfg = M.ModelConfig(**payload["model"])
    train_cfg = T.TrainConfig(**payload["train"])
    seed = payload["seed"]
    bundle = D.generate(spec)
    params, _ = A.train_arm(arm, bundle.train, bundle.schema, seed, model_cfg, train_cfg)
    oracle = A.bundle_oracle_auc(bundle)
    rows = []
    for rho in payload["rhos"]:
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, int(round(rho * 1e6)), 2718]))
        eval_rho = D.inject_missingness(bundle.eval, rho, rng)
        rep = A.evaluate_arm(arm, params, eval_rho, seed, config_hash=payload["config_hash"],
                             rho=rho, oracle_auc=oracle)
        rows.append(dataclasses.asdict(rep))
    return rows


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--jobs", type=int, default=1, help="Parallel (arm, seed) workers.")
@click.option("--out-dir", type=click.Path(), default=None)
def ablate(config_path, jobs, out_dir):
    """Train and evaluate a grid of arms x seeds (x eval missingness rates)."""
    doc = load_yaml(config_path)
    _check_keys(doc, {"synth", "arms", "seeds", "rhos", "model", "train", "out_dir"}, "config")
    spec = D.SynthSpec.from_dict(doc.get("synth", {}) or {})
    arm_docs = doc.get("arms", DEFAULT_ABLATION_ARMS)
    arms = [parse_arm(a) for a in arm_docs]
    if len({a.name for a in arms}) != len(arms):
        raise ConfigError("arms: duplicate arm names")
    seeds = [int(s) for s in doc.get("seeds", [0, 1, 2, 3, 4])]
    model_cfg = parse_model_config(doc.get("model", {}) or {})
    train_cfg = from_dict(T.TrainConfig, doc.get("train", {}) or {}, "train")

    # eval missingness is swept, so the generator leaves eval unmasked
    gen_mode = {"eval": "none", "both": "train", "none": "none", "train": "train"}[spec.missing_mode]
    default_rhos = [spec.rho] if spec.missing_mode in ("eval", "both") else [0.0]
    rhos = [float(r) for r in doc.get("rhos", default_rhos)]
    spec = dataclasses.replace(spec, missing_mode=gen_mode)

    schema_hash = D.build_schema(spec).hash()
    controlled = {A.controlled_hash(a.model_config(model_cfg), train_cfg, schema_hash) for a in arms}
    if len(controlled) != 1:
        raise ConfigError("arms disagree on shared architecture/optimizer settings")

    out = Path(out_dir or doc.get("out_dir") or ".")
    out.mkdir(parents=True, exist_ok=True)
    resolved = {
        "command": "ablate",
        "synth": spec.to_dict(),
        "arms": [a.to_dict() for a in arms],
        "seeds": seeds,
        "rhos": rhos,
        "model": dataclasses.asdict(model_cfg),
        "train": dataclasses.asdict(train_cfg),
        "controlled_hash": controlled.pop(),
    }
    h = write_resolved(out, resolved)

    tasks = [
        {"spec": spec.to_dict(), "arm": a.to_dict(), "seed": s, "rhos": rhos,
         "model": dataclasses.asdict(model_cfg), "train": dataclasses.asdict(train_cfg),
         "config_hash": h}
        for a in arms for s in seeds
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_ablate_task, tasks))
    else:
        results = [_ablate_task(t) for t in tasks]
    reports = [MetricsReport(**row) for rows in results for row in rows]
    reports.sort(key=lambda r: (r.arm, r.seed, r.rho))

    sweep = out / "sweep.csv"
    with open(sweep, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={h} code_version={__version__}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in reports:
            writer.writerow(r.to_csv_row())
    click.echo(f"wrote {sweep} ({len(reports)} rows) config_hash={h}")


def _read_sweep(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        lines = [l for l in fh.read().splitlines() if l.strip() and not l.startswith("#")]
    if not lines:
        raise DataError(f"{path}: empty sweep file")
    rows = list(csv.DictReader(lines))
    if not rows:
        raise DataError(f"{path}: no data rows")
    out = []
    for row in rows:
        try:
            out.append({
                "arm": row["arm"], "seed": int(row["seed"]),
                "rho": float(row["rho"]) if row["rho"] else None,
                "auc": float(row["auc"]), "uauc": float(row["uauc"]),
                "logloss": float(row["logloss"]),
            })
        except (KeyError, ValueError) as err:
            raise DataError(f"{path}: malformed sweep row {row!r}: {err}")
    return out


def _median(xs: list[float]) -> float:
    return float(np.median(np.asarray(xs, dtype=np.float64)))


def _arm_order(names) -> list[str]:
    known = [a for a in A.ARM_NAMES if a in names]
    return known + sorted(set(names) - set(known))


@cli.command()
@click.option("--sweep", "sweep_path", required=True, type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
def report(sweep_path, out_dir):
    """Summary tables plus plots (metric by arm, metric vs missingness) from a sweep CSV."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = _read_sweep(sweep_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    resolved = {"command": "report", "sweep": str(sweep_path)}
    h = write_resolved(out, resolved)

    rhos = sorted({r["rho"] for r in rows}, key=lambda x: (x is None, x))
    arms_present = _arm_order({r["arm"] for r in rows})
    med = {}  # (rho, arm) -> {"auc": .., "uauc": .., "seeds": {seed: auc}}
    for rho in rhos:
        for arm in arms_present:
            cell = [r for r in rows if r["arm"] == arm and r["rho"] == rho]
            if cell:
                med[(rho, arm)] = {
                    "auc": _median([c["auc"] for c in cell]),
                    "uauc": _median([c["uauc"] for c in cell]),
                    "seeds": {c["seed"]: c["auc"] for c in cell},
                }

    lines = ["# Sweep summary", "", f"config_hash: {h}", f"code_version: {__version__}", ""]
    for rho in rhos:
        lines.append(f"## eval missingness rho={rho}")
        lines.append("")
        lines.append("| arm | AUC (median) | RelaImpr AUC | UAUC (median) | RelaImpr UAUC |")
        lines.append("|---|---|---|---|---|")
        base = med.get((rho, "base"))
        for arm in arms_present:
            cell = med.get((rho, arm))
            if not cell:
                continue
            if base and arm != "base":
                ra = f"{relaimpr(cell['auc'], base['auc']):+.3f}%"
                ru = f"{relaimpr(cell['uauc'], base['uauc']):+.3f}%"
            else:
                ra = ru = "-"
            lines.append(f"| {arm} | {cell['auc']:.5f} | {ra} | {cell['uauc']:.5f} | {ru} |")
        lines.append("")
        seeds = sorted({s for (rr, _), c in med.items() if rr == rho for s in c["seeds"]})
        lines.append("Per-seed AUC:")
        lines.append("")
        lines.append("| arm | " + " | ".join(f"seed {s}" for s in seeds) + " |")
        lines.append("|---" * (len(seeds) + 1) + "|")
        for arm in arms_present:
            cell = med.get((rho, arm))
            if not cell:
                continue
            vals = " | ".join(f"{cell['seeds'][s]:.5f}" if s in cell["seeds"] else "-" for s in seeds)
            lines.append(f"| {arm} | {vals} |")
        lines.append("")
    (out / "summary.md").write_text("\n".join(lines), encoding="utf-8")

    meta = {"Software": "asymdiff", "Description": f"config_hash={h}"}
    primary = rhos[0]
    fig, ax = plt.subplots(figsize=(6, 4))
    arms_at_primary = [a for a in arms_present if (primary, a) in med]
    ax.bar(range(len(arms_at_primary)), [med[(primary, a)]["auc"] for a in arms_at_primary],
           color="#4878a8")
    ax.set_xticks(range(len(arms_at_primary)))
    ax.set_xticklabels(arms_at_primary, rotation=20, ha="right")
    ax.set_ylabel("AUC (median over seeds)")
    ax.set_title(f"AUC by arm at rho={primary}")
    fig.tight_layout()
    fig.savefig(out / "auc_by_arm.png", dpi=110, metadata=meta)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    for arm in arms_present:
        pts = [(rho, med[(rho, arm)]["uauc"]) for rho in rhos if (rho, arm) in med]
        if pts:
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=arm)
    ax.set_xlabel("eval missingness rho")
    ax.set_ylabel("UAUC (median over seeds)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "uauc_vs_rho.png", dpi=110, metadata=meta)
    plt.close(fig)
    click.echo(f"wrote {out}/summary.md, auc_by_arm.png, uauc_vs_rho.png config_hash={h}")


@cli.command()
@click.option("--n-features", default=12, show_default=True)
@click.option("--latent-dim", default=128, show_default=True)
@click.option("--denoiser-hidden", default=128, show_default=True)
@click.option("--samples", "n_samples", default=200, show_default=True)
@click.option("--repeats", default=30, show_default=True)
@click.option("--rho", default=0.2, show_default=True)
@click.option("--seed", default=0, show_default=True)
def bench(n_features, latent_dim, denoiser_hidden, n_samples, repeats, rho, seed):
    """Single-example serving latency: denoising path vs plain path."""
    if n_features < 3:
        raise ConfigError("n_features must be >= 3 (user, item, and context)")
    spec = D.SynthSpec(n_users=100, n_items=100, context_vocab_sizes=(20,) * (n_features - 2),
                       n_train=n_samples, n_eval=1, seed=seed, rho=rho, missing_mode="train")
    bundle = D.generate(spec)
    cfg = M.ModelConfig(latent_dim=latent_dim, denoiser_hidden=denoiser_hidden)
    params = M.init_params(bundle.schema, cfg, seed=seed)
    res = serving_overhead(params, bundle.train.to_samples(), repeats=repeats)
    res["config_hash"] = config_hash({"command": "bench", "n_features": n_features,
                                      "latent_dim": latent_dim, "denoiser_hidden": denoiser_hidden,
                                      "samples": n_samples, "repeats": repeats,
                                      "rho": rho, "seed": seed})
    res["code_version"] = __version__
    click.echo(json.dumps(res, sort_keys=True))


# ---------------------------------------------------------------------------
# Entry point with the exit-code contract
# ---------------------------------------------------------------------------

def run(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="asymdiff", standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.UsageError as err:
        click.echo(f"error: {err.format_message()}", err=True)
        return 1
    except click.ClickException as err:
        err.show()
        return 1
    except EngineError as err:
        click.echo(f"error: {err}", err=True)
        return err.exit_code
    except FileNotFoundError as err:
        click.echo(f"error: {err}", err=True)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()

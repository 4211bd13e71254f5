"""Command-line front end tying the pipeline together.

Configuration is a flat key=value table with section prefixes
(``decoder.epochs=15``), resolved in order: desk-scale defaults,
``--paper-scale`` overrides, the USD_SEED environment variable (seed keys
only), the ``--config`` file, ``--seed``, then repeated ``--set`` flags.
Every artifact-producing subcommand writes a RunManifest next to its
outputs, and ``rerun`` re-executes a manifest and reports whether the new
artifacts hash-match the recorded ones.

Exit codes: 0 success, 1 validation or configuration error, 2 numeric
failure, 3 resource exhaustion.
"""
import argparse
import os
import sys
import time

# pin BLAS threads before numpy loads so strict runs are reproducible
# independent of the host's thread count
if "--deterministic" in sys.argv or os.environ.get("USD_DETERMINISTIC"):
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, "1")

import json

import numpy as np

from . import checkpoint, codes, decoder, evalbench, manifest, oracle, reopt
from .errors import NumericError, ResourceError, UsdlabError, ValidationError

__all__ = ["main", "resolve_config", "parse_config_text"]


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

DESK_CONFIG = {
    "oracle.train_samples": "1000000",
    "oracle.test_samples": "100000",
    "oracle.batch_size": "1000",
    "oracle.epochs": "10",
    "oracle.lr": "0.0001",
    "oracle.optimizer": "AdamW",
    "oracle.hidden": "1000",
    "oracle.seed": "0",
    "dataset.size": "100000",
    "dataset.p": "0.01,0.02,0.03,0.04,0.05",
    "dataset.seed": "0",
    "decoder.batch_size": "1000",
    "decoder.epochs": "15",
    "decoder.lr": "0.0001",
    "decoder.optimizer": "RAdam",
    "decoder.embed_dim": "128",
    "decoder.heads": "8",
    "decoder.layers": "4",
    "decoder.ff_mult": "4",
    "decoder.readout": "mean",
    "decoder.eval_size": "2000",
    "decoder.seed": "0",
    "reopt.batch_size": "1000",
    "reopt.epochs": "20",
    "reopt.lr": "1e-07",
    "reopt.optimizer": "RAdam",
    "reopt.seed": "0",
    "sweep.trials": "10000",
    "sweep.grid": "desk",
    "sweep.seed": "0",
    "metrics.samples": "10000",
    "metrics.seed": "0",
}

# published full-scale values (decoder epochs: 50 for the 17-qubit code,
# 30 for the 23-qubit one; override decoder.epochs for the latter)
PAPER_CONFIG = {
    "oracle.train_samples": "10000000",
    "oracle.epochs": "50",
    "dataset.size": "1000000",
    "decoder.epochs": "50",
    "reopt.epochs": "75",
    "sweep.grid": "full",
}

# internal keys recording the subcommand's direct arguments so a manifest
# alone is enough to re-dispatch the run
RUN_KEYS = {"run.code", "run.dataset_in", "run.decoder", "run.dataset",
            "run.oracle", "run.decoder_a", "run.decoder_b", "run.paired"}

SEED_FLAG_TARGETS = {
    "train-oracle": ("oracle.seed",),
    "train-decoder": ("decoder.seed", "dataset.seed"),
    "reopt": ("reopt.seed",),
    "sweep": ("sweep.seed",),
    "metrics": ("metrics.seed",),
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _check_keys(values: dict, source: str) -> None:
    for key in values:
        if key not in DESK_CONFIG and key not in RUN_KEYS:
            raise ValidationError(f"{source}: unknown config key {key!r}")


def resolve_config(subcommand: str, config_file=None, paper_scale=False,
                   seed=None, sets=()) -> dict:
    cfg = dict(DESK_CONFIG)
    if paper_scale:
        cfg.update(PAPER_CONFIG)
    env_seed = os.environ.get("USD_SEED")
    if env_seed is not None:
        _int_or_die(env_seed, "USD_SEED")
        for key in cfg:
            if key.endswith(".seed"):
                cfg[key] = env_seed
    if config_file is not None:
        with open(config_file) as fh:
            loaded = parse_config_text(fh.read(), str(config_file))
        _check_keys(loaded, str(config_file))
        cfg.update(loaded)
    if seed is not None:
        for key in SEED_FLAG_TARGETS.get(subcommand, ()):
            cfg[key] = str(seed)
    overrides = {}
    for item in sets:
        if "=" not in item:
            raise ValidationError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    _check_keys(overrides, "--set")
    cfg.update(overrides)
    return cfg


def _int_or_die(value: str, key: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ValidationError(f"{key} must be an integer, got {value!r}")


def _float_or_die(value: str, key: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ValidationError(f"{key} must be a number, got {value!r}")


def _oracle_config(cfg: dict) -> oracle.OracleConfig:
    return oracle.OracleConfig(
        train_samples=_int_or_die(cfg["oracle.train_samples"], "oracle.train_samples"),
        test_samples=_int_or_die(cfg["oracle.test_samples"], "oracle.test_samples"),
        batch_size=_int_or_die(cfg["oracle.batch_size"], "oracle.batch_size"),
        epochs=_int_or_die(cfg["oracle.epochs"], "oracle.epochs"),
        lr=_float_or_die(cfg["oracle.lr"], "oracle.lr"),
        optimizer=cfg["oracle.optimizer"],
        hidden=_int_or_die(cfg["oracle.hidden"], "oracle.hidden"),
        seed=_int_or_die(cfg["oracle.seed"], "oracle.seed"))


def _decoder_config(cfg: dict) -> decoder.DecoderConfig:
    return decoder.DecoderConfig(
        batch_size=_int_or_die(cfg["decoder.batch_size"], "decoder.batch_size"),
        epochs=_int_or_die(cfg["decoder.epochs"], "decoder.epochs"),
        lr=_float_or_die(cfg["decoder.lr"], "decoder.lr"),
        optimizer=cfg["decoder.optimizer"],
        embed_dim=_int_or_die(cfg["decoder.embed_dim"], "decoder.embed_dim"),
        heads=_int_or_die(cfg["decoder.heads"], "decoder.heads"),
        layers=_int_or_die(cfg["decoder.layers"], "decoder.layers"),
        ff_mult=_int_or_die(cfg["decoder.ff_mult"], "decoder.ff_mult"),
        readout=cfg["decoder.readout"],
        eval_size=_int_or_die(cfg["decoder.eval_size"], "decoder.eval_size"),
        seed=_int_or_die(cfg["decoder.seed"], "decoder.seed"))


def _reopt_config(cfg: dict) -> reopt.ReoptConfig:
    return reopt.ReoptConfig(
        batch_size=_int_or_die(cfg["reopt.batch_size"], "reopt.batch_size"),
        epochs=_int_or_die(cfg["reopt.epochs"], "reopt.epochs"),
        lr=_float_or_die(cfg["reopt.lr"], "reopt.lr"),
        optimizer=cfg["reopt.optimizer"],
        seed=_int_or_die(cfg["reopt.seed"], "reopt.seed"))


def _parse_grid(spec: str):
    if spec == "desk":
        return list(evalbench.DESK_GRID)
    if spec == "full":
        return list(evalbench.full_grid())
    try:
        return [float(tok) for tok in spec.split(",") if tok.strip()]
    except ValueError:
        raise ValidationError(f"sweep.grid must be desk, full, or comma-separated "
                              f"floats, got {spec!r}")


def _parse_schedule(spec: str):
    try:
        values = [float(tok) for tok in spec.split(",") if tok.strip()]
    except ValueError:
        raise ValidationError(f"dataset.p must be comma-separated floats, got {spec!r}")
    if not values:
        raise ValidationError("dataset.p is empty")
    return values[0] if len(values) == 1 else values


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------

def _require_file(path, what: str) -> str:
    if not os.path.isfile(path):
        raise ValidationError(f"{what} not found: {path}")
    return os.path.abspath(path)


def _code_inputs(code) -> dict:
    return {f"code:{code.name}": codes.definition_hash(code)}


def _write_log_csv(path, rows, columns) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.10g}" if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def _echo(line: str) -> None:
    print(line, flush=True)


# ---------------------------------------------------------------------------
# subcommand implementations; each takes the resolved config and an output
# directory and returns (inputs, output_paths, metrics, seeds)
# ---------------------------------------------------------------------------

def _run_train_oracle(cfg: dict, out: str):
    code = codes.get_code(cfg["run.code"])
    ocfg = _oracle_config(cfg)
    model, log = oracle.train_oracle(
        code, ocfg,
        progress=lambda e: _echo(f"epoch {e.epoch}: train_mse {e.train_mse:.6f} "
                                 f"test_mse {e.test_mse:.6f}"))
    samples = _int_or_die(cfg["metrics.samples"], "metrics.samples")
    cos, mse, mae = evalbench.oracle_quality(
        model, code, samples, np.random.default_rng(ocfg.seed))
    metrics = {"final_train_mse": log[-1].train_mse,
               "final_test_mse": log[-1].test_mse,
               "cosine": cos, "mse": mse, "mae": mae}
    ckpt = os.path.join(out, "oracle.ckpt")
    oracle.save_oracle(model, ckpt, code, config=ocfg, metrics=metrics)
    log_path = os.path.join(out, "oracle_log.csv")
    _write_log_csv(log_path, [(e.epoch, e.train_mse, e.test_mse) for e in log],
                   ["epoch", "train_mse", "test_mse"])
    _echo(f"oracle quality on {samples} held-out samples: "
          f"cosine {cos:.5f} mse {mse:.5f} mae {mae:.5f}")
    outputs = [ckpt, checkpoint.sidecar_path(ckpt), log_path]
    return (_code_inputs(code), outputs, metrics, {"oracle": ocfg.seed})


def _run_train_decoder(cfg: dict, out: str):
    code = codes.get_code(cfg["run.code"])
    dcfg = _decoder_config(cfg)
    inputs = _code_inputs(code)
    outputs = []
    dataset_in = cfg.get("run.dataset_in", "")
    if dataset_in:
        dataset_in = _require_file(dataset_in, "dataset")
        ds = decoder.load_dataset(dataset_in, code)
        inputs[dataset_in] = manifest.sha256_file(dataset_in)
    else:
        ds = decoder.make_training_set(
            code, _int_or_die(cfg["dataset.size"], "dataset.size"),
            _parse_schedule(cfg["dataset.p"]),
            _int_or_die(cfg["dataset.seed"], "dataset.seed"))
        ds_path = os.path.join(out, "dataset.bin")
        decoder.save_dataset(ds, ds_path)
        outputs.append(ds_path)
    model, log = decoder.train_decoder(
        code, ds, dcfg,
        progress=lambda e: _echo(f"epoch {e.epoch}: train_bce {e.train_bce:.6f} "
                                 f"test_bce {e.test_bce:.6f}"))
    ckpt = os.path.join(out, "decoder.ckpt")
    decoder.save_decoder(model, ckpt, code, config=dcfg, epochs_run=len(log),
                         final_test_bce=log[-1].test_bce)
    log_path = os.path.join(out, "decoder_log.csv")
    _write_log_csv(log_path, [(e.epoch, e.train_bce, e.test_bce) for e in log],
                   ["epoch", "train_bce", "test_bce"])
    outputs.extend([ckpt, checkpoint.sidecar_path(ckpt), log_path])
    metrics = {"final_train_bce": log[-1].train_bce,
               "final_test_bce": log[-1].test_bce, "epochs_run": len(log)}
    return (inputs, outputs, metrics,
            {"decoder": dcfg.seed,
             "dataset": _int_or_die(cfg["dataset.seed"], "dataset.seed")})


def _load_decoder_with_code(path):
    info = checkpoint.read_sidecar(path)
    code = codes.get_code(info.get("code_name"))
    return decoder.load_decoder(path, code), code


def _run_reopt(cfg: dict, out: str):
    ckpt_in = _require_file(cfg["run.decoder"], "decoder checkpoint")
    data_in = _require_file(cfg["run.dataset"], "dataset")
    model, code = _load_decoder_with_code(ckpt_in)
    ds = decoder.load_dataset(data_in, code)
    rcfg = _reopt_config(cfg)
    inputs = _code_inputs(code)
    inputs[ckpt_in] = manifest.sha256_file(ckpt_in)
    inputs[data_in] = manifest.sha256_file(data_in)
    oracle_spec = cfg["run.oracle"]
    if oracle_spec == "exact":
        oracle_like = oracle.ExactOracle(code)
    else:
        oracle_path = _require_file(oracle_spec, "oracle checkpoint")
        oracle_like = oracle.load_oracle(oracle_path, code)
        inputs[oracle_path] = manifest.sha256_file(oracle_path)
    result = reopt.run_reopt(
        model, oracle_like, ds, rcfg,
        progress=lambda e: _echo(f"epoch {e.epoch}: loss {e.loss:.8f}"))

    pre = os.path.join(out, "pre.ckpt")
    decoder.save_decoder(model, pre, code)
    post = os.path.join(out, "post.ckpt")
    decoder.save_decoder(result.model, post, code, epochs_run=len(result.log))
    log_path = os.path.join(out, "reopt_log.csv")
    _write_log_csv(log_path, [(e.epoch, e.loss) for e in result.log],
                   ["epoch", "loss"])
    outputs = [pre, checkpoint.sidecar_path(pre), post,
               checkpoint.sidecar_path(post), log_path]
    metrics = {"epochs_run": float(len(result.log)), "aborted": float(result.aborted)}
    if result.log:
        metrics["first_epoch_loss"] = result.log[0].loss
        metrics["final_epoch_loss"] = result.log[-1].loss
    return (inputs, outputs, metrics, {"reopt": rcfg.seed}), result.aborted


def _sweep_fn(code, spec: str):
    if spec == "zero":
        return evalbench.zero_decoder(code), "zero", None
    path = _require_file(spec, "decoder checkpoint")
    model = decoder.load_decoder(path, code)
    name = os.path.splitext(os.path.basename(path))[0]
    return decoder.as_decoder_fn(model), name, path


def _run_sweep(cfg: dict, out: str):
    code = codes.get_code(cfg["run.code"])
    grid = _parse_grid(cfg["sweep.grid"])
    trials = _int_or_die(cfg["sweep.trials"], "sweep.trials")
    seed = _int_or_die(cfg["sweep.seed"], "sweep.seed")
    inputs = _code_inputs(code)
    outputs = []
    metrics = {}
    if cfg.get("run.paired") == "1":
        fn_a, id_a, path_a = _sweep_fn(code, cfg["run.decoder_a"])
        fn_b, id_b, path_b = _sweep_fn(code, cfg["run.decoder_b"])
        if id_a == id_b:
            id_a, id_b = id_a + "_a", id_b + "_b"
        for path in (path_a, path_b):
            if path:
                inputs[path] = manifest.sha256_file(path)
        paired = evalbench.sweep_paired(code, fn_a, fn_b, grid, trials, seed,
                                        id_a=id_a, id_b=id_b)
        for res in (paired.a, paired.b):
            csv_path = os.path.join(out, f"sweep_{res.decoder_id}.csv")
            evalbench.save_sweep_csv(res, csv_path)
            outputs.append(csv_path)
        diff_csv = os.path.join(out, "difference.csv")
        evalbench.save_difference_csv(paired, diff_csv)
        curves = os.path.join(out, "curves.svg")
        evalbench.plot_sweeps([paired.a, paired.b], curves)
        diff_svg = os.path.join(out, "difference.svg")
        evalbench.plot_difference(paired, diff_svg)
        outputs.extend([diff_csv, curves, diff_svg])
        diff = paired.difference()
        metrics = {"mean_rate_a": float(paired.a.rates().mean()),
                   "mean_rate_b": float(paired.b.rates().mean()),
                   "mean_difference": float(diff.mean())}
        for pt_a, d in zip(paired.a.points, diff):
            _echo(f"p={pt_a.p:.4g}: {id_a} {pt_a.rate:.4f}  "
                  f"diff {d:+.4f}")
    else:
        fn, dec_id, path = _sweep_fn(code, cfg["run.decoder"])
        if path:
            inputs[path] = manifest.sha256_file(path)
        res = evalbench.sweep(code, fn, grid, trials, seed, decoder_id=dec_id)
        csv_path = os.path.join(out, f"sweep_{dec_id}.csv")
        evalbench.save_sweep_csv(res, csv_path)
        curves = os.path.join(out, "curves.svg")
        evalbench.plot_sweeps([res], curves)
        outputs.extend([csv_path, curves])
        metrics = {"mean_rate": float(res.rates().mean())}
        for pt in res.points:
            _echo(f"p={pt.p:.4g}: rate {pt.rate:.4f} "
                  f"[{pt.ci_low:.4f},{pt.ci_high:.4f}]")
    return (inputs, outputs, metrics, {"sweep": seed})


def _run_metrics(cfg: dict, out: str):
    code = codes.get_code(cfg["run.code"])
    samples = _int_or_die(cfg["metrics.samples"], "metrics.samples")
    seed = _int_or_die(cfg["metrics.seed"], "metrics.seed")
    inputs = _code_inputs(code)
    oracle_spec = cfg["run.oracle"]
    if oracle_spec == "exact":
        oracle_like = oracle.ExactOracle(code)
    else:
        path = _require_file(oracle_spec, "oracle checkpoint")
        oracle_like = oracle.load_oracle(path, code)
        inputs[path] = manifest.sha256_file(path)
    seqs = np.random.SeedSequence(seed).spawn(3)
    rngs = [np.random.Generator(np.random.PCG64(s)) for s in seqs]
    cos, mse, mae = evalbench.oracle_quality(oracle_like, code, samples, rngs[0])
    ratio = evalbench.dirichlet_ratio(oracle_like, code, samples, rngs[1])
    per_gen, inv_mean = evalbench.group_invariance(oracle_like, code, samples,
                                                  rngs[2])
    metrics = {"cosine": cos, "mse": mse, "mae": mae,
               "dirichlet_ratio": ratio, "group_invariance": inv_mean}
    _echo(f"cosine {cos:.6f}  mse {mse:.6f}  mae {mae:.6f}")
    _echo(f"dirichlet_ratio {ratio:.6f}")
    _echo(f"group_invariance mean {inv_mean:.6g} "
          f"(max per generator {float(np.max(per_gen)):.6g})")
    report = os.path.join(out, "metrics.json")
    with open(report, "w") as fh:
        json.dump({**metrics,
                   "per_generator_invariance": [float(v) for v in per_gen]},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    return (inputs, [report], metrics, {"metrics": seed})


RUNNERS = {
    "train-oracle": _run_train_oracle,
    "train-decoder": _run_train_decoder,
    "sweep": _run_sweep,
    "metrics": _run_metrics,
}


def _execute(subcommand: str, cfg: dict, out: str, deterministic: bool):
    """Run one manifest-producing subcommand and write its manifest.
    Returns the manifest path; raises NumericError after recording when a
    re-optimization aborted on NaN."""
    os.makedirs(out, exist_ok=True)
    t0 = time.time()
    aborted = False
    if subcommand == "reopt":
        (inputs, outputs, metrics, seeds), aborted = _run_reopt(cfg, out)
    else:
        inputs, outputs, metrics, seeds = RUNNERS[subcommand](cfg, out)
    run = manifest.RunManifest(
        run_id=manifest.new_run_id(subcommand, cfg),
        subcommand=subcommand,
        config=dict(sorted(cfg.items())),
        seeds=seeds,
        inputs=inputs,
        outputs=manifest.hash_artifacts(outputs, base=out),
        duration_seconds=round(time.time() - t0, 3),
        metrics={k: float(v) for k, v in metrics.items()},
        deterministic=deterministic)
    man_path = os.path.join(out, "manifest.json")
    manifest.save_manifest(run, man_path)
    _echo(f"manifest: {man_path}")
    if aborted:
        raise NumericError(
            "re-optimization hit NaN; post checkpoint holds the last "
            "completed epoch")
    return man_path


# ---------------------------------------------------------------------------
# codes subcommand (no manifest; pure inspection and export)
# ---------------------------------------------------------------------------

EXPECTED_DISTANCE = {"color-d5": 5, "golay": 7}


def _cmd_codes(args) -> int:
    if args.action == "list":
        for name in sorted(codes.BUILTIN_CODES):
            code = codes.get_code(name)
            _echo(f"{name}: n={code.n} generators={code.num_rows} k=1")
        return 0
    if args.action == "export":
        if not args.code:
            raise ValidationError("codes export needs a code name")
        code = codes.get_code(args.code)
        if not args.out:
            raise ValidationError("codes export needs --out FILE")
        codes.save_definition(code, args.out)
        _echo(f"wrote {args.out} ({codes.definition_hash(code)[:12]})")
        return 0
    # verify: construction re-runs commutation/rank/logical checks; the
    # distance comes from exhaustive enumeration
    if not args.code:
        raise ValidationError("codes verify needs a code name or file")
    if os.path.isfile(args.code):
        code = codes.load_definition(args.code)
    else:
        code = codes.get_code(args.code)
    rebuilt = codes.build_custom(list(code.rows), name=code.name)
    _echo(f"code {code.name}: n={code.n} generators={code.num_rows}")
    _echo("commutation, independence, logical derivation: ok")
    d = codes.code_distance(rebuilt)
    want = EXPECTED_DISTANCE.get(code.name)
    if want is None:
        _echo(f"distance: {d}")
    else:
        _echo(f"distance: {d} (expected {want})")
        if d != want:
            raise ValidationError(
                f"distance check failed: measured {d}, expected {want}")
    _echo("PASS")
    return 0


# ---------------------------------------------------------------------------
# rerun
# ---------------------------------------------------------------------------

def _cmd_rerun(args) -> int:
    run = manifest.load_manifest(args.manifest)
    if run.subcommand not in set(RUNNERS) | {"reopt"}:
        raise ValidationError(f"cannot rerun subcommand {run.subcommand!r}")
    for path, want in run.inputs.items():
        if path.startswith("code:"):
            continue
        if not os.path.isfile(path):
            raise ValidationError(f"recorded input missing: {path}")
        got = manifest.sha256_file(path)
        if got != want:
            raise ValidationError(
                f"recorded input changed since the original run: {path}")
    _echo(f"re-running {run.subcommand} from {args.manifest}")
    try:
        _execute(run.subcommand, run.config, args.out, deterministic=True)
    except NumericError:
        pass   # original may have aborted the same way; judge by the hashes
    fresh = manifest.load_manifest(os.path.join(args.out, "manifest.json"))
    mismatched = []
    for rel, want in run.outputs.items():
        got = fresh.outputs.get(rel)
        status = "identical" if got == want else "DIFFERS"
        if got is None:
            status = "MISSING"
        _echo(f"{rel}: {status}")
        if status != "identical":
            mismatched.append(rel)
    if mismatched:
        raise ValidationError(
            f"rerun artifacts differ from manifest: {', '.join(mismatched)}")
    _echo("rerun reproduced all artifacts")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors, which this tool reserves for
    # numeric failures; remap to the validation exit code
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def _add_common(sub) -> None:
    sub.add_argument("--config", help="key=value config file")
    sub.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override one config entry (repeatable)")
    sub.add_argument("--seed", type=int, help="seed for this subcommand")
    sub.add_argument("--paper-scale", action="store_true",
                     help="use the published full-scale sizes")
    sub.add_argument("--deterministic", action="store_true",
                     help="strict mode: single-threaded numerics, recorded "
                          "in the manifest")
    sub.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="usdlab",
                     description="decoder laboratory for stabilizer codes")
    subs = parser.add_subparsers(dest="subcommand", required=True)

    p_codes = subs.add_parser("codes", parents=[], help="inspect built-in codes")
    p_codes.add_argument("action", choices=("list", "export", "verify"))
    p_codes.add_argument("code", nargs="?", help="code name or definition file")
    p_codes.add_argument("--out", help="export destination file")

    p_oracle = subs.add_parser("train-oracle", help="train the syndrome MLP")
    p_oracle.add_argument("--code", required=True, help="built-in code name")
    _add_common(p_oracle)

    p_dec = subs.add_parser("train-decoder", help="train the syndrome decoder")
    p_dec.add_argument("--code", required=True)
    p_dec.add_argument("--dataset", help="reuse an existing dataset file "
                                         "instead of sampling a new one")
    _add_common(p_dec)

    p_re = subs.add_parser("reopt", help="frozen-oracle re-optimization")
    p_re.add_argument("--decoder", required=True, help="decoder checkpoint")
    p_re.add_argument("--dataset", required=True,
                      help="the decoder's original training set")
    p_re.add_argument("--oracle", required=True,
                      help="oracle checkpoint, or 'exact' for the closed form")
    _add_common(p_re)

    p_sw = subs.add_parser("sweep", help="logical error rate sweep")
    p_sw.add_argument("--code", required=True)
    p_sw.add_argument("--decoder", help="decoder checkpoint or 'zero'")
    p_sw.add_argument("--paired", nargs=2, metavar=("A", "B"),
                      help="two decoders sharing one error sample")
    _add_common(p_sw)

    p_me = subs.add_parser("metrics", help="oracle structural metrics")
    p_me.add_argument("--code", required=True)
    p_me.add_argument("--oracle", required=True,
                      help="oracle checkpoint or 'exact'")
    _add_common(p_me)

    p_rr = subs.add_parser("rerun", help="re-execute a recorded run and "
                                         "compare artifact hashes")
    p_rr.add_argument("manifest", help="manifest.json of the original run")
    p_rr.add_argument("--out", required=True, help="fresh output directory")
    return parser


def _dispatch(args) -> int:
    if args.subcommand == "codes":
        return _cmd_codes(args)
    if args.subcommand == "rerun":
        return _cmd_rerun(args)
    cfg = resolve_config(args.subcommand, config_file=args.config,
                         paper_scale=args.paper_scale, seed=args.seed,
                         sets=args.set)
    if args.subcommand == "train-oracle":
        cfg["run.code"] = args.code
    elif args.subcommand == "train-decoder":
        cfg["run.code"] = args.code
        cfg["run.dataset_in"] = os.path.abspath(args.dataset) if args.dataset else ""
    elif args.subcommand == "reopt":
        cfg["run.decoder"] = os.path.abspath(args.decoder)
        cfg["run.dataset"] = os.path.abspath(args.dataset)
        cfg["run.oracle"] = args.oracle if args.oracle == "exact" \
            else os.path.abspath(args.oracle)
    elif args.subcommand == "sweep":
        cfg["run.code"] = args.code
        if args.paired:
            cfg["run.paired"] = "1"
            cfg["run.decoder_a"], cfg["run.decoder_b"] = [
                d if d == "zero" else os.path.abspath(d) for d in args.paired]
        elif args.decoder:
            cfg["run.paired"] = "0"
            cfg["run.decoder"] = args.decoder if args.decoder == "zero" \
                else os.path.abspath(args.decoder)
        else:
            raise ValidationError("sweep needs --decoder or --paired")
    elif args.subcommand == "metrics":
        cfg["run.code"] = args.code
        cfg["run.oracle"] = args.oracle if args.oracle == "exact" \
            else os.path.abspath(args.oracle)
    _execute(args.subcommand, cfg, args.out, args.deterministic)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return 3
    except UsdlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""``lesionviz`` command line: gen-data | train | viz | grid.

Progress goes to stderr, results to stdout as tab-separated lines. Errors
print ``error: <category>: <detail>`` as the first stderr line and exit
with 2 (config/validation), 3 (I/O) or 4 (numerical divergence).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint, plotting, synthdata, training
from .errors import ConfigError, DataIOError, DivergenceError, LesionVizError, ShapeError
from .featureviz import ascend_many, mosaic, noise_activations, sobel_energy
from .featureviz.ascent import initial_noise
from .config import RunConfig
from .io import atomic_write_text, write_pgm
from .model import _check_target

log = logging.getLogger("lesionviz")

EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 2, 3, 4


def _out(*fields):
    print("\t".join(str(f) for f in fields))


def _require_file(path: Path, what: str) -> Path:
    if not path.exists():
        raise ConfigError(f"{what} not found: {path}")
    return path


def cmd_gen_data(cfg: RunConfig) -> int:
    root = cfg.path("dataset")
    phantom, lesion, sizes = cfg.phantom_spec(), cfg.lesion_spec(), cfg.sizes()
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataIOError(f"cannot create dataset directory {root}: {exc}") from exc
    log.info("generating %s dataset %s into %s", lesion.shape, sizes, root)
    man = synthdata.make_dataset(phantom, lesion, sizes, cfg["run.seed"], root)
    _out("split", "count", "lesioned_fraction")
    for split in synthdata.SPLITS:
        recs = man.split(split)
        _out(split, len(recs), f"{np.mean([r.label for r in recs]):.4f}")
    return 0


def cmd_train(cfg: RunConfig) -> int:
    manifest_path = cfg.path("dataset")
    if manifest_path.is_dir():
        manifest_path = manifest_path / synthdata.MANIFEST_NAME
    _require_file(manifest_path, "dataset manifest")
    ckpt_path = cfg.path("checkpoint")
    tconf = cfg.train_config()
    man = synthdata.read_manifest(manifest_path)
    spec = cfg.model_spec(man.phantom.height, man.phantom.width)
    ckpt, history = training.train(spec, man, tconf)
    checkpoint.save(ckpt, ckpt_path)
    atomic_write_text(ckpt_path.with_suffix(".metrics.tsv"), training.metrics_table(history))
    plotting.plot_training(history, ckpt_path.with_suffix(".metrics.png"))
    _out("epochs_run", ckpt.metadata["epochs_run"])
    _out("best_epoch", ckpt.metadata["best_epoch"])
    _out("val_loss", f"{ckpt.metadata['best_val_loss']:.6f}")
    _out("val_balanced_accuracy", f"{ckpt.metadata['best_val_balanced_accuracy']:.4f}")
    return 0


def _load_for_viz(cfg: RunConfig):
    ckpt = checkpoint.load(_require_file(cfg.path("checkpoint"), "checkpoint"))
    out_dir = cfg.path("output")
    return ckpt, out_dir


def _write_run(out_dir: Path, stem: str, res) -> None:
    write_pgm(out_dir / f"{stem}.pgm", res.image)
    atomic_write_text(out_dir / f"{stem}.trace.tsv", res.trace_table())


def cmd_viz(cfg: RunConfig) -> int:
    ckpt, out_dir = _load_for_viz(cfg)
    vconf = cfg.viz_config()
    _check_target(ckpt.spec, vconf.layer, vconf.channel)
    log.info("ascending layer %d channel %d for %d iterations", vconf.layer, vconf.channel, vconf.iterations)
    res = ascend_many(ckpt.spec, ckpt.params, vconf, [vconf.channel], [vconf.seed])[0]
    acts = noise_activations(ckpt.spec, ckpt.params, vconf.layer, cfg["viz.baseline_samples"], vconf.seed,
                             vconf.init_range)[:, vconf.channel]
    p95 = float(np.percentile(acts, 95))
    stem = f"viz_L{vconf.layer}_C{vconf.channel}"
    _write_run(out_dir, stem, res)
    rows = [("layer", vconf.layer), ("channel", vconf.channel), ("seed", vconf.seed),
            ("initial_f", f"{res.initial[0]:.10g}"), ("final_f", f"{res.final[0]:.10g}"),
            ("initial_total", f"{res.initial[2]:.10g}"), ("final_total", f"{res.final[2]:.10g}"),
            ("baseline_p95", f"{p95:.10g}"), ("exceeds_baseline", int(res.final[0] > p95))]
    atomic_write_text(out_dir / f"{stem}.summary.tsv", "".join(f"{k}\t{v}\n" for k, v in rows))
    plotting.plot_viz(res, out_dir / f"{stem}.png", p95)
    for row in rows:
        _out(*row)
    return 0


def select_channels(n_channels: int, count: int, seed: int, layer: int) -> list:
    rng = np.random.default_rng([seed, layer])
    return sorted(int(c) for c in rng.choice(n_channels, size=min(count, n_channels), replace=False))


def run_seed(base: int, layer: int, channel: int) -> int:
    return base * 100_000 + layer * 1000 + channel


def cmd_grid(cfg: RunConfig) -> int:
    ckpt, out_dir = _load_for_viz(cfg)
    spec = ckpt.spec
    layers = cfg["grid.layers"]
    for layer in layers:
        _check_target(spec, layer, 0)
    per_layer = cfg["grid.channels_per_layer"]
    if per_layer < 1:
        raise ConfigError(f"grid.channels_per_layer must be >= 1, got {per_layer}")
    grid_seed, viz_seed = cfg.seed_for("grid"), cfg.seed_for("viz")
    results, rows = {}, []
    for layer in layers:
        vconf = cfg.viz_config(layer=layer)
        channels = select_channels(spec.conv_filters[layer - 1], per_layer, grid_seed, layer)
        seeds = [run_seed(viz_seed, layer, c) for c in channels]
        log.info("layer %d: channels %s", layer, channels)
        res = ascend_many(spec, ckpt.params, vconf, channels, seeds)
        acts = noise_activations(spec, ckpt.params, layer, cfg["viz.baseline_samples"], viz_seed,
                                 vconf.init_range)
        for r in res:
            _write_run(out_dir, f"grid_L{layer}_C{r.channel}", r)
            start = initial_noise(spec.input_shape, vconf.init_range, np.random.default_rng(r.seed))
            rows.append((layer, r.channel, r.seed, r.initial[0], r.final[0], r.initial[2], r.final[2],
                         float(np.percentile(acts[:, r.channel], 95)), sobel_energy(start),
                         sobel_energy(r.image)))
        write_pgm(out_dir / f"mosaic_L{layer}.pgm", mosaic([r.image for r in res], ncols=len(res)))
        results[layer] = res
    header = ("layer", "channel", "seed", "initial_f", "final_f", "initial_total", "final_total",
              "baseline_p95", "sobel_initial", "sobel_final")
    lines = ["\t".join(header)] + ["\t".join(str(v) if isinstance(v, int) else f"{v:.10g}" for v in row)
                                   for row in rows]
    table = "\n".join(lines) + "\n"
    atomic_write_text(out_dir / "grid_summary.tsv", table)
    plotting.plot_grid(results, out_dir / "grid.png")
    sys.stdout.write(table)
    return 0


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "viz": cmd_viz, "grid": cmd_grid}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lesionviz", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("-c", "--config", help="config file of 'section.key = value' lines")
        p.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable; wins over the file)")
        p.add_argument("-q", "--quiet", action="store_true", help="suppress progress output")
    return parser


def _fail(category: str, detail, code: int) -> int:
    detail = " ".join(str(detail).split())
    print(f"error: {category}: {detail}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", force=True)
    try:
        cfg = RunConfig.load(args.config, args.set)
        # non-finite values are detected explicitly and reported as exit code 4
        with np.errstate(all="ignore"):
            return COMMANDS[args.command](cfg)
    except (ConfigError, ShapeError) as exc:
        return _fail("config" if isinstance(exc, ConfigError) else "validation", exc, EXIT_CONFIG)
    except DivergenceError as exc:
        return _fail("numerical", exc, EXIT_NUMERIC)
    except DataIOError as exc:
        return _fail("io", exc, EXIT_IO)
    except LesionVizError as exc:
        return _fail(exc.category, exc, EXIT_CONFIG)
    except OSError as exc:
        return _fail("io", exc, EXIT_IO)


if __name__ == "__main__":
    sys.exit(main())

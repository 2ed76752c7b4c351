"""Command line interface: config loading, bound tables and figure data as CSV.

Configs are JSON objects.  The ``kind`` key selects the schema (``arch``,
``transformer`` or ``genbound``); when absent it is inferred from the keys.
Every emitted file starts with ``#`` metadata lines carrying the tool
version, a hash of the validated config, the coefficient mode and variant.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from typing import Iterable, Sequence

from . import __version__
from .activations import ActivationKind, activation_bound
from .combinatorics import FactorMode, LogMagnitude
from .composer import TransformerSpec, tblock_table, transformer_table
from .genbound import DEFAULT_TAU_CAP, GenBoundInput, envelope, transition_times
from .multiindex import EnumerationCapError, type_key
from .oracle import COMPONENTS, soundness_check
from .primitives import ArchSpec, BLOCKS, block_bound, block_input_dim

__all__ = [
    "ConfigError",
    "PRESETS",
    "load_config",
    "config_from_dict",
    "format_value",
    "emit_table",
    "figure_data",
    "FIGURES",
    "main",
]

EXIT_OK, EXIT_CONFIG, EXIT_CAP, EXIT_VIOLATION = 0, 2, 3, 4

# reference configurations of the published tables
PRESETS = {
    "block": ArchSpec(M=1, i=5, k=3, v=25, l=64, o=5, C_K=0.01, C_Q=0.01, C_V=0.01, C_W=0.01,
                      C_A=0.001, C_B1=0.001, C_B2=0.001, gamma=0.01, radius=1.0),
    "multihead": ArchSpec(M=1, i=5, k=3, v=25, C_K=0.1, C_Q=0.1, C_V=0.1, C_W=0.1, radius=1.0),
    "layernorm": ArchSpec(i=5, gamma=0.1, radius=10.0),
    "perceptron": ArchSpec(i=5, l=64, o=5, C_A=1.0, C_B1=1.0, C_B2=1.0, radius=1.0),
}


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


# Config loading ------------------------------------------------------------

_INT_FIELDS = ("M", "i", "k", "v", "l", "o", "H")
_STR_FIELDS = ("activation", "sigma_convention")


def _arch_from_dict(data: dict, path: str) -> ArchSpec:
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    known = set(ArchSpec.field_names())
    clean = {}
    for key, val in data.items():
        if key == "kind":
            continue
        fp = f"{path}.{key}"
        if key not in known:
            raise ConfigError(f"{fp}: unknown field")
        if key in _INT_FIELDS:
            if isinstance(val, bool) or not isinstance(val, int) or val < 1:
                raise ConfigError(f"{fp}: must be a positive integer, got {val!r}")
        elif key in _STR_FIELDS:
            if not isinstance(val, str):
                raise ConfigError(f"{fp}: must be a string")
        elif key == "gamma2" and val is None:
            pass
        else:
            if isinstance(val, bool) or not isinstance(val, (int, float)) or val < 0:
                raise ConfigError(f"{fp}: must be a nonnegative number, got {val!r}")
            if key == "w" and val > 1:
                raise ConfigError(f"{fp}: must lie in [0, 1], got {val!r}")
            val = float(val)
        clean[key] = val
    try:
        return ArchSpec(**clean)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _transformer_from_dict(data: dict, path: str) -> TransformerSpec:
    blocks = data.get("blocks")
    if not isinstance(blocks, list) or not blocks:
        raise ConfigError(f"{path}.blocks: expected a nonempty list")
    specs = [_arch_from_dict(b, f"{path}.blocks[{j}]") for j, b in enumerate(blocks)]
    extra = {k: v for k, v in data.items() if k not in ("kind", "blocks")}
    for key in extra:
        if key not in ("final_A_bound", "final_b_bound", "out_dim"):
            raise ConfigError(f"{path}.{key}: unknown field")
    try:
        return TransformerSpec(tuple(specs), **extra)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _constant(val, fp: str) -> LogMagnitude:
    if isinstance(val, dict) and set(val) == {"log10"}:
        return LogMagnitude(float(val["log10"]))
    if isinstance(val, bool) or not isinstance(val, (int, float)) or val < 0:
        raise ConfigError(f"{fp}: expected a nonnegative number or {{\"log10\": x}}")
    return LogMagnitude.of(float(val))


def _genbound_from_dict(data: dict, path: str) -> GenBoundInput:
    allowed = {"kind", "kappa", "delta", "N", "t", "Md", "constants"}
    for key in data:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown field")
    for key in ("kappa", "Md", "constants"):
        if key not in data:
            raise ConfigError(f"{path}.{key}: missing required field")
    consts = data["constants"]
    if isinstance(consts, list):
        consts = {str(j): c for j, c in enumerate(consts)}
    if not isinstance(consts, dict):
        raise ConfigError(f"{path}.constants: expected an object or list")
    parsed = {}
    for key, val in consts.items():
        try:
            s = int(key)
        except ValueError:
            raise ConfigError(f"{path}.constants.{key}: keys must be integers") from None
        parsed[s] = _constant(val, f"{path}.constants.{key}")
    t = data.get("t", "inf")
    t = math.inf if t in ("inf", None) else t
    try:
        return GenBoundInput(kappa=float(data["kappa"]), delta=float(data.get("delta", 0.05)),
                             N=int(data.get("N", 100)), t=t, Md=int(data["Md"]), constants=parsed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_from_dict(data: dict, path: str = "config"):
    """Validate a parsed config object; see the module docstring for the kinds."""
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    kind = data.get("kind")
    if kind is None:
        kind = "transformer" if "blocks" in data else "genbound" if "kappa" in data else "arch"
    if kind == "arch":
        return _arch_from_dict(data, path)
    if kind == "transformer":
        return _transformer_from_dict(data, path)
    if kind == "genbound":
        return _genbound_from_dict(data, path)
    raise ConfigError(f"{path}.kind: unknown kind {kind!r}")


def load_config(path: str):
    """Read and validate a JSON config (or ``preset:<name>``)."""
    if path.startswith("preset:"):
        name = path.split(":", 1)[1]
        if name not in PRESETS:
            raise ConfigError(f"preset: unknown preset {name!r}")
        return PRESETS[name]
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    return config_from_dict(data)


def config_to_dict(cfg) -> dict:
    """Canonical, JSON-ready form of a validated config, defaults included."""
    if isinstance(cfg, ArchSpec):
        return {"kind": "arch", **cfg.to_dict()}
    if isinstance(cfg, TransformerSpec):
        return {"kind": "transformer", "blocks": [b.to_dict() for b in cfg.blocks],
                "final_A_bound": cfg.final_A_bound, "final_b_bound": cfg.final_b_bound,
                "out_dim": cfg.out_dim}
    if isinstance(cfg, GenBoundInput):
        return {"kind": "genbound", "kappa": cfg.kappa, "delta": cfg.delta, "N": cfg.N,
                "t": "inf" if cfg.t == math.inf else cfg.t, "Md": cfg.Md,
                "constants": {str(s): {"log10": c.log10} for s, c in sorted(cfg.constants.items())}}
    if cfg is None:
        return {}
    raise TypeError(f"cannot serialise {type(cfg).__name__}")


def config_hash(cfg) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# Emission ------------------------------------------------------------------

def format_value(x) -> str:
    """Fixed two decimals below 1e3, else scientific with two decimals (``1.33E+04``)."""
    lm = x if isinstance(x, LogMagnitude) else None
    if lm is None:
        x = float(x)
        if math.isnan(x):
            return "nan"
        if x < 0:
            return "-" + format_value(-x)
        if math.isinf(x):
            return "inf"
        if x < 1e3:
            return f"{x:.2f}"
        lm = LogMagnitude.of(x)
    if lm.is_zero:
        return "0.00"
    if lm.log10 == math.inf:
        return "inf"
    if lm.log10 < 3:
        return f"{lm.value():.2f}"
    if lm.log10 < 300:
        return f"{lm.value():.2E}"
    # beyond comfortable float range: build the mantissa from the logarithm
    e = math.floor(lm.log10)
    mant = round(10.0 ** (lm.log10 - e), 2)
    if mant >= 10.0:
        mant, e = mant / 10.0, e + 1
    return f"{mant:.2f}E+{e:02d}"


def _cell(v) -> str:
    if isinstance(v, (LogMagnitude, float)):
        return format_value(v)
    if v is None:
        return "unreached"
    return str(v)


def emit_table(rows: Sequence[dict], out=None, meta: dict | None = None, echo: dict | None = None) -> str:
    """Write rows as CSV with ``#`` metadata lines; returns the text.

    ``out`` may be a path, a writable text stream or ``None`` (return only).
    ``echo`` is written as a second comment line, typically the validated
    config with its defaults filled in.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("emit_table needs at least one row")
    buf = io.StringIO()
    meta = dict(meta or {})
    meta.setdefault("version", __version__)
    buf.write("# " + " ".join(f"{k}={meta[k]}" for k in sorted(meta)) + "\n")
    if echo is not None:
        buf.write("# config " + json.dumps(echo, sort_keys=True, separators=(",", ":")) + "\n")
    header = list(rows[0].keys())
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(row.get(h)) for h in header])
    text = buf.getvalue()
    if out is None:
        return text
    if isinstance(out, str):
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        out.write(text)
    return text


def _meta(cfg, mode=None, variant=None) -> dict:
    return {
        "config": config_hash(cfg),
        "mode": FactorMode.parse(mode).value if mode is not None else "none",
        "variant": variant or "none",
    }


# Tables --------------------------------------------------------------------

def activation_rows(kinds: Iterable[str], max_order: int, convention: str = "table") -> list[dict]:
    rows = []
    for kind in kinds:
        k = ActivationKind.parse(kind)
        for s in range(1, max_order + 1):
            rows.append({"activation": k.value, "order": s,
                         "bound": activation_bound(k, s, convention=convention)})
    return rows


def block_rows(spec: ArchSpec, block: str, variant: str, mode, max_order: int,
               per_type: bool = False) -> list[dict]:
    rows = []
    if block == "block":
        table = tblock_table(spec, max_order, variant, mode)
        return [{"block": block, "order": n, "bound": table.at(n)} for n in range(1, max_order + 1)]
    if block not in BLOCKS:
        raise ConfigError(f"block: unknown block {block!r}")
    dim = block_input_dim(spec, block)
    for n in range(1, max_order + 1):
        if variant == "level":
            rows.append({"block": block, "order": n, "type": "", "bound": block_bound(spec, block, "level", n, mode)})
            continue
        types = sorted({type_key(t) for t in _ordered(dim, n)}, reverse=True)
        bounds = {t: block_bound(spec, block, "type", t, mode) for t in types}
        if per_type:
            rows.extend({"block": block, "order": n, "type": "-".join(map(str, t)), "bound": b}
                        for t, b in bounds.items())
        else:
            worst = max(bounds, key=lambda t: bounds[t])
            rows.append({"block": block, "order": n, "type": "-".join(map(str, worst)), "bound": bounds[worst]})
    return rows


def _ordered(dim: int, n: int):
    from .multiindex import enum_ordered
    return enum_ordered(min(dim, n), n)


def _as_transformer(cfg) -> TransformerSpec:
    if isinstance(cfg, TransformerSpec):
        return cfg
    if isinstance(cfg, ArchSpec):
        return TransformerSpec((cfg,))
    raise ConfigError("config: expected an arch or transformer config")


def _as_arch(cfg) -> ArchSpec:
    if not isinstance(cfg, ArchSpec):
        raise ConfigError("config: expected an arch config")
    return cfg


def _as_genbound(cfg) -> GenBoundInput:
    if not isinstance(cfg, GenBoundInput):
        raise ConfigError("config: expected a genbound config")
    return cfg


# Figure data ---------------------------------------------------------------

DEFAULT_GENBOUND = GenBoundInput(kappa=0.5, delta=0.05, N=100, t=math.inf, Md=2,
                                 constants={s: LogMagnitude.one() for s in range(6)})


def _log10(v) -> float:
    return LogMagnitude.of(v).log10


def _series(name: str, xs, ys) -> list[dict]:
    return [{"series": name, "x": x, "y_log10": f"{y:.6f}"} for x, y in zip(xs, ys)]


def figure_data(which: str, block: ArchSpec | None = None, gen: GenBoundInput | None = None,
                mode="exact", s_max: int = 5) -> list[dict]:
    """Long-format rows ``(series, x, y_log10)`` for one figure."""
    block = PRESETS["block"] if block is None else block
    gen = DEFAULT_GENBOUND if gen is None else gen
    mode = FactorMode.parse(mode)
    orders = list(range(1, s_max + 1))
    rows: list[dict] = []
    if which == "activation_curves":
        for kind in ActivationKind:
            rows += _series(kind.value, range(1, 11), [_log10(activation_bound(kind, s)) for s in range(1, 11)])
    elif which == "block_comparison":
        for comp in ("multihead", "layernorm", "feedforward"):
            rows += _series(comp, orders, [block_bound(block, comp, "level", s, mode).log10 for s in orders])
        table = tblock_table(block, s_max, "level", mode)
        rows += _series("block", orders, [table.at(s).log10 for s in orders])
    elif which == "type_vs_level":
        for variant in ("type", "level"):
            table = tblock_table(block, s_max, variant, mode)
            rows += _series(variant, orders, [table.at(s).log10 for s in orders])
    elif which == "transition_vs_dim":
        smax = min(s_max, gen.orders[-1])
        dims = list(range(2, 21))
        taus = [transition_times(gen.with_(Md=d), smax) for d in dims]
        for s in range(1, smax + 1):
            ys = [math.inf if t[s] is None else math.log10(t[s]) if t[s] > 0 else -math.inf for t in taus]
            rows += _series(f"tau_{s}", dims, ys)
    elif which == "architecture_sweep":
        for i in (5, 10, 20):
            spec = block.with_(i=i, o=i)
            table = tblock_table(spec, s_max, "level", mode)
            rows += _series(f"i={i}", orders, [table.at(s).log10 for s in orders])
    else:
        raise ValueError(f"unknown figure {which!r}")
    return rows


FIGURES = ("activation_curves", "block_comparison", "type_vs_level", "transition_vs_dim", "architecture_sweep")


# Argument parsing ----------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tfbounds", description="Derivative and generalization bounds for transformers.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True, variant=True):
        if config:
            sp.add_argument("config", help="JSON config path or preset:<name> (block, multihead, layernorm, perceptron)")
        sp.add_argument("-o", "--output", default=None, help="output path (default: stdout)")
        sp.add_argument("--mode", default="exact", choices=["exact", "paper"],
                        help="coefficient mode (default: exact)")
        sp.add_argument("--max-order", type=int, default=5, help="largest derivative order (default: 5)")
        if variant:
            sp.add_argument("--variant", default="level", choices=["type", "level"], help="bound variant (default: level)")

    sp = sub.add_parser("activation", help="C^s bounds of activation functions")
    common(sp, config=False, variant=False)
    sp.set_defaults(max_order=10)
    sp.add_argument("--kinds", nargs="+", default=[k.value for k in ActivationKind],
                    help="activations (default: all four)")
    sp.add_argument("--convention", default="table", choices=["table", "derivative"],
                    help="softplus indexing (default: table)")

    sp = sub.add_parser("block-bounds", help="bounds of one component or a full block")
    common(sp)
    sp.add_argument("--block", default="block", choices=sorted(BLOCKS) + ["block"], help="component (default: block)")
    sp.add_argument("--per-type", action="store_true", help="list every type instead of the worst one")

    sp = sub.add_parser("transformer-bounds", help="bounds of a stacked transformer")
    common(sp)

    sp = sub.add_parser("genbound", help="generalization bound envelope over N")
    common(sp, variant=False)
    sp.add_argument("--N", dest="n_values", type=int, nargs="+", default=None,
                    help="sample sizes (default: powers of ten from 10^2 to 10^8)")

    sp = sub.add_parser("transitions", help="transition times tau_s")
    common(sp, variant=False)
    sp.add_argument("--cap", type=int, default=DEFAULT_TAU_CAP, help="search cap for N (default: 1e12)")

    sp = sub.add_parser("verify", help="finite-difference soundness check")
    sp.add_argument("config")
    sp.add_argument("-o", "--output", default=None, help="JSON report path (default: stdout)")
    sp.add_argument("--component", default="block", choices=list(COMPONENTS))
    sp.add_argument("--trials", type=int, default=50, help="sampled networks (default: 50)")
    sp.add_argument("--n-max", type=int, default=2, help="largest order checked (default: 2)")
    sp.add_argument("--seed", type=int, default=0, help="base seed (default: 0)")
    sp.add_argument("--grid", type=int, default=64, help="sample points per network (default: 64)")
    sp.add_argument("--fd-step", type=float, default=None, help="finite-difference step (default: 1e-3 / 1e-2)")

    sp = sub.add_parser("figure", help="long-format figure data")
    sp.add_argument("which", choices=FIGURES)
    sp.add_argument("-o", "--output", default=None)
    sp.add_argument("--block-config", default=None, help="arch config (default: preset:block)")
    sp.add_argument("--genbound-config", default=None, help="genbound config (default: built-in)")
    sp.add_argument("--mode", default="exact", choices=["exact", "paper"])
    sp.add_argument("--max-order", type=int, default=5)
    return p


def _write(text: str, output: str | None) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _run(args) -> int:
    cmd = args.command
    if getattr(args, "max_order", 1) < 1:
        raise ConfigError("--max-order: must be >= 1")
    if cmd == "activation":
        rows = activation_rows(args.kinds, args.max_order, args.convention)
        meta = {"config": "none", "mode": "none", "variant": args.convention}
        _write(emit_table(rows, meta=meta), args.output)
        return EXIT_OK
    if cmd == "figure":
        block = _as_arch(load_config(args.block_config)) if args.block_config else None
        gen = _as_genbound(load_config(args.genbound_config)) if args.genbound_config else None
        rows = figure_data(args.which, block, gen, args.mode, args.max_order)
        meta = {"config": config_hash(block or PRESETS["block"]) + "-" + config_hash(gen or DEFAULT_GENBOUND),
                "mode": args.mode, "variant": args.which}
        _write(emit_table(rows, meta=meta), args.output)
        return EXIT_OK
    cfg = load_config(args.config)
    if cmd == "block-bounds":
        rows = block_rows(_as_arch(cfg), args.block, args.variant, args.mode, args.max_order, args.per_type)
        _write(emit_table(rows, meta=_meta(cfg, args.mode, args.variant), echo=config_to_dict(cfg)), args.output)
    elif cmd == "transformer-bounds":
        table = transformer_table(_as_transformer(cfg), args.max_order, args.variant, args.mode)
        rows = [{"order": n, "bound": table.at(n)} for n in range(1, args.max_order + 1)]
        _write(emit_table(rows, meta=_meta(cfg, args.mode, args.variant), echo=config_to_dict(cfg)), args.output)
    elif cmd == "genbound":
        gen = _as_genbound(cfg)
        ns = args.n_values or [10**p for p in range(2, 9)]
        rows = [{"N": n, "best_s": s, "bound": b} for n, s, b in envelope(gen, ns, args.max_order)]
        _write(emit_table(rows, meta=_meta(cfg, args.mode, "envelope"), echo=config_to_dict(cfg)), args.output)
    elif cmd == "transitions":
        gen = _as_genbound(cfg)
        smax = min(args.max_order, gen.orders[-1])
        taus = transition_times(gen, smax, args.cap)
        rows = [{"s": s, "tau": t} for s, t in enumerate(taus)]
        _write(emit_table(rows, meta=_meta(cfg, args.mode, "transitions"), echo=config_to_dict(cfg)), args.output)
    elif cmd == "verify":
        report = soundness_check(_as_arch(cfg), args.n_max, args.trials, args.seed, args.component,
                                 grid=args.grid, step=args.fd_step)
        report["config"] = config_hash(cfg)
        report["version"] = __version__
        _write(json.dumps(report, indent=2, sort_keys=True) + "\n", args.output)
        return EXIT_VIOLATION if report["violations"] else EXIT_OK
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EnumerationCapError as exc:
        print(f"enumeration cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

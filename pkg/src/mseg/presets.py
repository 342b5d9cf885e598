"""Text format for model presets.

One directive per line; ``#`` starts a comment; blank lines ignored.

    name <ident>
    multiplier <float>
    activation <relu|relu6|sigmoid>
    norm <bn|none>
    stem conv <out_ch> <kernel> <stride>
    stem maxpool <kernel> <stride>
    stage <growth> <n_layers> <transition_ch> <down|keep>
    tap <name> <stage_index> <transition|down> <stride>
    decoder rfb_out_ch <int>
    decoder dilations <d1> <d2> <d3>
    decoder activation <name>
    decoder norm <bn|none>

``stage`` and ``stem`` lines apply in file order.  Every field has a
counterpart in :class:`~mseg.hardnet.BackboneCfg` / :class:`~mseg.decoder.DecoderCfg`.
"""

from __future__ import annotations

import dataclasses

from .decoder import DecoderCfg
from .errors import ConfigError
from .hardnet import BackboneCfg, StageCfg, StemOp, TapCfg

_ACTS = ("relu", "relu6", "sigmoid")
_NORMS = ("bn", "none")


def parse_preset(text: str) -> tuple[BackboneCfg, DecoderCfg]:
    fields = {"multiplier": None, "name": None, "activation": "relu6", "norm": "bn"}
    stem: list[StemOp] = []
    stages: list[StageCfg] = []
    taps: list[TapCfg] = []
    dec: dict = {}

    def fail(ln, msg):
        raise ConfigError(f"preset line {ln}: {msg}")

    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        key, args = tok[0], tok[1:]
        try:
            if key == "name" and len(args) == 1:
                fields["name"] = args[0]
            elif key == "multiplier" and len(args) == 1:
                fields["multiplier"] = float(args[0])
            elif key == "activation" and args[0] in _ACTS and len(args) == 1:
                fields["activation"] = args[0]
            elif key == "norm" and args[0] in _NORMS and len(args) == 1:
                fields["norm"] = args[0]
            elif key == "stem" and args[0] == "conv" and len(args) == 4:
                stem.append(StemOp("conv", int(args[1]), int(args[2]), int(args[3])))
            elif key == "stem" and args[0] == "maxpool" and len(args) == 3:
                stem.append(StemOp("maxpool", 0, int(args[1]), int(args[2])))
            elif key == "stage" and len(args) == 4 and args[3] in ("down", "keep"):
                stages.append(StageCfg(int(args[0]), int(args[1]), int(args[2]), args[3] == "down"))
            elif key == "tap" and len(args) == 4 and args[2] in ("transition", "down"):
                taps.append(TapCfg(args[0], int(args[1]), args[2], int(args[3])))
            elif key == "decoder" and args[0] == "rfb_out_ch" and len(args) == 2:
                dec["rfb_out_ch"] = int(args[1])
            elif key == "decoder" and args[0] == "dilations" and len(args) == 4:
                dec["dilations"] = tuple(int(a) for a in args[1:])
            elif key == "decoder" and args[0] == "activation" and len(args) == 2 and args[1] in _ACTS:
                dec["activation"] = args[1]
            elif key == "decoder" and args[0] == "norm" and len(args) == 2 and args[1] in _NORMS:
                dec["norm"] = args[1]
            else:
                fail(ln, f"unrecognized directive {line!r}")
        except (ValueError, IndexError) as e:
            if isinstance(e, ConfigError):
                raise
            fail(ln, f"bad value in {line!r}: {e}")
    if fields["name"] is None or fields["multiplier"] is None:
        raise ConfigError("preset must set both 'name' and 'multiplier'")
    if not stem or not stages or not taps:
        raise ConfigError("preset needs at least one stem op, one stage, and one tap")
    try:
        bcfg = BackboneCfg(fields["name"], fields["multiplier"], tuple(stem), tuple(stages),
                           tuple(taps), fields["activation"], fields["norm"])
        dcfg = DecoderCfg(**dec)
    except ValueError as e:
        raise ConfigError(f"preset validation failed: {e}") from e
    return bcfg, dcfg


def format_preset(bcfg: BackboneCfg, dcfg: DecoderCfg) -> str:
    out = [f"name {bcfg.name}", f"multiplier {bcfg.multiplier}",
           f"activation {bcfg.activation}", f"norm {bcfg.norm}"]
    for op in bcfg.stem:
        if op.kind == "conv":
            out.append(f"stem conv {op.out_ch} {op.kernel} {op.stride}")
        else:
            out.append(f"stem maxpool {op.kernel} {op.stride}")
    for st in bcfg.stages:
        out.append(f"stage {st.growth} {st.n_layers} {st.transition_ch} "
                   f"{'down' if st.downsample else 'keep'}")
    for t in bcfg.taps:
        out.append(f"tap {t.name} {t.stage} {t.point} {t.stride}")
    for f in dataclasses.fields(DecoderCfg):
        v = getattr(dcfg, f.name)
        out.append(f"decoder {f.name} {' '.join(map(str, v)) if isinstance(v, tuple) else v}")
    return "\n".join(out) + "\n"


def load_preset(path) -> tuple[BackboneCfg, DecoderCfg]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return parse_preset(f.read())
    except OSError as e:
        raise ConfigError(f"cannot read preset {path}: {e}") from e


def save_preset(path, bcfg: BackboneCfg, dcfg: DecoderCfg) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_preset(bcfg, dcfg))

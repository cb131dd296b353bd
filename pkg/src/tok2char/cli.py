"""Command-line interface.

Every option can also be set through an environment variable named
``TOK2CHAR_<OPTION>`` (for example ``TOK2CHAR_MODE=exact``); explicit flags
win over the environment.

Exit codes: 0 success, 2 dead end, 3 undefined conditional, 4 input or
format error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from . import __version__
from .bench import bench_corpus, gnuplot_dump, run_bench_grid
from .bounds import bounds_report, verify_bound
from .charlm import Mode, generate_chars, initial_state
from .covering import count_cover
from .errors import DeadEnd, Tok2CharError, UndefinedConditional
from .fixtures import get_fixture
from .generation import conditional_token_generation, heal_report
from .lm import CappedLM, StdioLM, TableLM, serve_stdio
from .vocab import Vocabulary, load_gpt2_vocab, vocab_from_hf_json, vocab_from_tiktoken

EXIT_OK = 0
EXIT_DEAD_END = 2
EXIT_UNDEFINED = 3
EXIT_INPUT = 4

ENV_PREFIX = "TOK2CHAR_"


class InputError(Tok2CharError):
    """Bad command-line input (missing vocabulary, unreadable file, ...)."""


def _env(name: str, default=None):
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"), default)


def _env_int(name: str, default=None):
    raw = _env(name)
    if raw is None or raw == "":
        return default
    return None if raw in ("inf", "none") else int(raw)


def _width(text: str):
    return None if text in ("inf", "none") else int(text)


def _show(b: bytes) -> str:
    return b.decode("utf-8", errors="backslashreplace")


def _log2(logp: float):
    """log base 2; ``-inf`` is emitted as the string ``"-inf"`` to keep JSON strict."""
    return "-inf" if logp == -math.inf else logp / math.log(2)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("model options")
    g.add_argument("--vocab", default=_env("vocab"),
                   help='vocabulary file (JSON Lines, optionally .gz) or "gpt2"')
    g.add_argument("--lm", default=_env("lm"),
                   help="TableLM JSON file, fixture:NAME or stdio:COMMAND")
    g.add_argument("--mode", default=_env("mode", "bundled"),
                   help="exact, bucket[:K] or bundled[:K] (default bundled)")
    g.add_argument("--beam", type=_width, default=_env_int("beam"), metavar="K",
                   help="beam width for bucket/bundled modes (default 32)")
    g.add_argument("--reference-beam", type=_width, default=_env_int("reference_beam"),
                   metavar="K", help='reference width for bench ("inf" = unpruned)')
    g.add_argument("--max-tokens", type=int, default=_env_int("max_tokens"),
                   help="force EOS after this many tokens")
    g.add_argument("--seed", type=int, default=_env_int("seed", 0))
    g.add_argument("--format", choices=("json", "text"), default=_env("format", "json"))
    g.add_argument("--hex", action="store_true",
                   help="text arguments are hex-encoded bytes")
    return p


class Context:
    """Resolved vocabulary, model and mode for one invocation."""

    def __init__(self, args):
        self.args = args
        self.fixture = None
        self._vocab = None
        self._lm = None
        source = args.lm or ""
        if source.startswith("fixture:"):
            try:
                self.fixture = get_fixture(source[len("fixture:"):])
            except (KeyError, ValueError) as exc:
                raise InputError(str(exc)) from None
        mode = Mode.parse(args.mode)
        if args.beam is not None and mode.kind != "exact":
            mode = Mode(mode.kind, args.beam)
        self.mode = mode

    @property
    def vocab(self) -> Vocabulary:
        if self._vocab is None:
            src = self.args.vocab
            if src == "gpt2":
                self._vocab = load_gpt2_vocab()
            elif src:
                try:
                    self._vocab = Vocabulary.load(src)
                except OSError as exc:
                    raise InputError(f"cannot read vocabulary: {exc}") from None
            elif self.fixture is not None:
                self._vocab = self.fixture.vocab
            else:
                raise InputError("no vocabulary given (--vocab or --lm fixture:NAME)")
        return self._vocab

    @property
    def lm(self):
        if self._lm is None:
            source = self.args.lm
            if not source:
                raise InputError("no language model given (--lm)")
            if self.fixture is not None:
                lm = self.fixture.lm
                if len(self.vocab) != lm.vocab_size:
                    raise InputError("vocabulary does not match the fixture model")
            elif source.startswith("stdio:"):
                lm = StdioLM(source[len("stdio:"):], len(self.vocab))
            else:
                try:
                    lm = TableLM.load(source, len(self.vocab))
                except OSError as exc:
                    raise InputError(f"cannot read model: {exc}") from None
            if self.args.max_tokens is not None:
                lm = CappedLM(lm, self.args.max_tokens)
            if self.mode.kind == "exact" and getattr(lm, "cap", None) is None:
                raise InputError("exact mode needs a capped TableLM or --max-tokens")
            self._lm = lm
        return self._lm

    def text(self, raw: str) -> bytes:
        if self.args.hex:
            try:
                return bytes.fromhex(raw)
            except ValueError:
                raise InputError(f"not a hex string: {raw!r}") from None
        return raw.encode("utf-8")

    def close(self):
        if isinstance(self._lm, StdioLM):
            self._lm.close()
        elif isinstance(self._lm, CappedLM) and isinstance(self._lm.lm, StdioLM):
            self._lm.lm.close()


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_score(ctx: Context, args) -> dict:
    x = ctx.text(args.text)
    state = initial_state(ctx.lm, ctx.vocab, ctx.mode).extend(x)
    return {
        "text": _show(x),
        "mode": str(ctx.mode),
        "log2_prefix_prob": _log2(state.log_prefix_prob()),
        "log2_full_prob": _log2(state.log_full_prob()),
    }


def cmd_next_char(ctx: Context, args) -> dict:
    x = ctx.text(args.text)
    dist = initial_state(ctx.lm, ctx.vocab, ctx.mode).extend(x).next_char_dist()
    return {"text": _show(x), "mode": str(ctx.mode), "dist": dist.to_mapping()}


def cmd_generate(ctx: Context, args) -> dict:
    prompt = ctx.text(args.prompt)
    if args.chars:
        out = generate_chars(ctx.lm, ctx.vocab, prompt, ctx.mode, args.seed,
                             max_chars=args.max_chars)
        return {"prompt": _show(prompt), "mode": str(ctx.mode), "unit": "chars",
                "text": _show(out), "hex": out.hex(), "tokens": None}
    y = conditional_token_generation(ctx.lm, ctx.vocab, prompt, ctx.mode, args.seed)
    out = ctx.vocab.decode(y)
    return {"prompt": _show(prompt), "mode": str(ctx.mode), "unit": "tokens",
            "text": _show(out), "hex": out.hex(), "tokens": list(y)}


def cmd_cover(ctx: Context, args) -> dict:
    x = ctx.text(args.text)
    if args.count_only:
        cover, enc = count_cover(ctx.vocab, x)
        return {"text": _show(x), "cover_size": cover, "encodings": enc}
    state = initial_state(ctx.lm, ctx.vocab, ctx.mode).extend(x)
    items = state.items if isinstance(state.items, list) else state.items()
    items = sorted(items, key=lambda it: (-it.logp, it.y))
    shown = items if args.top is None else items[: args.top]
    return {
        "text": _show(x),
        "mode": str(ctx.mode),
        "cover_size": len(items),
        "log2_prefix_prob": _log2(state.log_prefix_prob()),
        "items": [
            {"tokens": list(it.y), "decoded": _show(it.x_decoded), "p": it.p,
             "exact": it.x_decoded == x}
            for it in shown
        ],
    }


def cmd_count_cover(ctx: Context, args) -> dict:
    x = ctx.text(args.text)
    cover, enc = count_cover(ctx.vocab, x)
    return {"text": _show(x), "cover_size": cover, "encodings": enc}


def cmd_bounds(ctx: Context, args) -> dict:
    report = bounds_report(ctx.vocab, args.n, max_n=args.claims_n).to_json()
    if args.text is not None:
        x = ctx.text(args.text)
        report["check"] = {"text": _show(x), "cover_size": str(count_cover(ctx.vocab, x)[0]),
                           "holds": verify_bound(ctx.vocab, x)}
    return report


def cmd_bench(ctx: Context, args) -> dict:
    if args.corpus:
        corpus = Path(args.corpus).read_bytes()[: args.chars]
        corpus_id = args.corpus
    elif ctx.fixture is not None and ctx.fixture.name == "bench":
        corpus = bench_corpus(args.chars, args.seed, ctx.fixture)
        corpus_id = f"bench-{args.seed}-{args.chars}"
    else:
        raise InputError("bench needs --corpus or --lm fixture:bench")
    if args.beams:
        widths = [_width(k) for k in args.beams.split(",")]
    else:
        widths = [ctx.mode.K]
    kind = ctx.mode.kind
    if kind == "exact":
        raise InputError("bench compares pruned beams; use --mode bundled or bucket")
    results = run_bench_grid(ctx.lm, ctx.vocab, corpus, widths, args.reference_beam,
                             jobs=args.jobs, kind=kind, model_id=ctx.args.lm or "",
                             corpus_id=corpus_id, n_boot=args.bootstrap, seed=args.seed)
    if args.csv:
        out = Path(args.csv)
        out.mkdir(parents=True, exist_ok=True)
        for r in results:
            (out / f"bench_K{r.config['K']}.csv").write_text(r.to_csv())
    if args.gnuplot:
        Path(args.gnuplot).write_text(gnuplot_dump(results))
    rows = []
    for r in results:
        row = r.to_json()
        if args.summary:
            row.pop("per_char_jsd")
            row.pop("per_char_seconds")
        rows.append(row)
    return {"results": rows}


def cmd_heal(ctx: Context, args) -> dict:
    x = ctx.text(args.prompt)
    r = heal_report(ctx.lm, ctx.vocab, x, ctx.mode, args.seed)
    v = ctx.vocab
    return {
        "prompt": _show(x),
        "greedy_encoding": list(r["greedy_encoding"]),
        "cover_top": {"tokens": list(r["cover_top"]), "decoded": _show(v.decode(r["cover_top"])),
                      "weight": r["cover_top_weight"]},
        "healing_first_stage": [
            {"tokens": list(y), "decoded": _show(v.decode(y)), "weight": w}
            for y, w in r["healing_first_stage"].items()
        ],
        "healing_mass_on_cover_top": r["healing_mass_on_cover_top"],
        "conditional_mass_on_cover_top": r["conditional_mass_on_cover_top"],
        "samples": {
            name: {"tokens": list(r[name]), "text": _show(v.decode(r[name]))}
            for name in ("naive", "healed", "conditional")
        },
    }


def cmd_convert_vocab(ctx: Context, args) -> dict:
    src = Path(args.input)
    try:
        if args.source == "tiktoken":
            specials = {}
            for item in args.special or []:
                text, _, idx = item.rpartition("=")
                specials[text] = int(idx)
            v = vocab_from_tiktoken(src.read_text().splitlines(), specials)
        else:
            v = vocab_from_hf_json(json.loads(src.read_text(encoding="utf-8")))
    except (OSError, ValueError) as exc:
        if isinstance(exc, Tok2CharError):
            raise
        raise InputError(f"cannot convert {src}: {exc}") from None
    v.save(args.output)
    return {"input": str(src), "output": args.output, "entries": len(v)}


def cmd_serve(ctx: Context, args) -> dict | None:
    serve_stdio(ctx.lm, sys.stdin, sys.stdout)
    return None


# ---------------------------------------------------------------------------
# Text rendering
# ---------------------------------------------------------------------------


def _render_text(command: str, out: dict) -> str:
    if command == "next-char":
        lines = [f"{k!r}\t{p:.6g}" for k, p in sorted(out["dist"].items(), key=lambda kv: -kv[1])]
        return "\n".join(lines)
    if command == "cover" and "items" in out:
        lines = [f"{it['p']:.6g}\t{it['tokens']}\t{it['decoded']!r}" for it in out["items"]]
        lines.append(f"# {out['cover_size']} items")
        return "\n".join(lines)
    if command == "heal":
        s = out["samples"]
        return "\n".join([
            f"prompt        {out['prompt']!r}",
            f"naive         {s['naive']['text']!r}",
            f"healed        {s['healed']['text']!r}",
            f"conditional   {s['conditional']['text']!r}",
            f"cover top     {out['cover_top']['decoded']!r} (weight {out['cover_top']['weight']:.4g})",
            f"healing mass on cover top      {out['healing_mass_on_cover_top']:.4g}",
            f"conditional mass on cover top  {out['conditional_mass_on_cover_top']:.4g}",
        ])
    if command == "bench":
        lines = ["K\tmean_jsd\tchars/sec\tdead_ends"]
        for r in out["results"]:
            lines.append(f"{r['config']['K']}\t{r['mean_jsd']:.6g}\t{r['chars_per_sec']:.1f}"
                         f"\t{len(r['dead_end_positions'])}")
        return "\n".join(lines)
    return "\n".join(f"{k}\t{v}" for k, v in out.items())


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

COMMANDS = {
    "score": cmd_score,
    "next-char": cmd_next_char,
    "generate": cmd_generate,
    "cover": cmd_cover,
    "count-cover": cmd_count_cover,
    "bounds": cmd_bounds,
    "bench": cmd_bench,
    "heal": cmd_heal,
    "convert-vocab": cmd_convert_vocab,
    "serve": cmd_serve,
}


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="tok2char",
        description="Character-level queries against token-level language models.",
        epilog="Options go after the command, e.g. tok2char score --lm fixture:fix1 ab",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("score", parents=[common], help="log2 prefix and full probability")
    p.add_argument("text")

    p = sub.add_parser("next-char", parents=[common], help="next-character distribution")
    p.add_argument("text")

    p = sub.add_parser("generate", parents=[common], help="sample a continuation of a prompt")
    p.add_argument("prompt", nargs="?", default="")
    unit = p.add_mutually_exclusive_group()
    unit.add_argument("--tokens", action="store_true", help="sample token strings (default)")
    unit.add_argument("--chars", action="store_true", help="sample one character at a time")
    p.add_argument("--max-chars", type=int, default=None)

    p = sub.add_parser("cover", parents=[common], help="list the covering of a string")
    p.add_argument("text")
    p.add_argument("--top", type=int, default=None, metavar="N")
    p.add_argument("--count-only", action="store_true", help="count members without a model")

    p = sub.add_parser("count-cover", parents=[common], help="exact |C(x)| and |E(x)|")
    p.add_argument("text")

    p = sub.add_parser("bounds", parents=[common], help="fertility, munch and size bounds")
    p.add_argument("--n", type=int, default=16, help="length of the bound table")
    p.add_argument("--claims-n", type=int, default=12,
                   help="lengths used when checking closed forms")
    p.add_argument("--text", default=None, help="also check the bound on this string")

    p = sub.add_parser("bench", parents=[common], help="JSD and throughput against a reference")
    p.add_argument("--corpus", default=None, help="corpus file (bytes)")
    p.add_argument("--chars", type=int, default=2000)
    p.add_argument("--beams", default=None, help="comma-separated widths, e.g. 1,2,8")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--bootstrap", type=int, default=1000, help="bootstrap replicates")
    p.add_argument("--csv", default=None, metavar="DIR", help="write per-position CSV files")
    p.add_argument("--gnuplot", default=None, metavar="FILE")
    p.add_argument("--summary", action="store_true", help="omit per-position arrays")

    p = sub.add_parser("heal", parents=[common], help="naive vs healed vs covering-based sampling")
    p.add_argument("prompt")

    p = sub.add_parser("convert-vocab", parents=[common], help="convert a vocabulary dump")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--from", dest="source", choices=("tiktoken", "hf-json"), default="tiktoken")
    p.add_argument("--special", action="append", metavar="TEXT=ID")

    sub.add_parser("serve", parents=[common], help="answer the stdio model protocol")
    return parser


def _error(args, exc: Exception, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, DeadEnd):
        payload["index"] = exc.index
    if getattr(args, "format", "json") == "json":
        print(json.dumps(payload), file=sys.stderr)
    else:
        print(f"error: {payload['error']}: {payload['message']}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    ctx = None
    try:
        ctx = Context(args)
        out = COMMANDS[args.command](ctx, args)
    except DeadEnd as exc:
        return _error(args, exc, EXIT_DEAD_END)
    except UndefinedConditional as exc:
        return _error(args, exc, EXIT_UNDEFINED)
    except (Tok2CharError, ValueError, OSError) as exc:
        return _error(args, exc, EXIT_INPUT)
    finally:
        if ctx is not None:
            ctx.close()
    if out is None:
        return EXIT_OK
    if args.format == "json":
        print(json.dumps(out, indent=1, allow_nan=False))
    else:
        print(_render_text(args.command, out))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

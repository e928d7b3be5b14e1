"""Command-line entry point.

Exit codes: 0 success, 1 internal error, 2 configuration error,
3 provider failure, 4 adapter failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import Config, load_config
from .corpus import corpus_stats, load_corpus
from .errors import (
    AdapterError,
    AdapterStageFailed,
    BugReproError,
    ConfigError,
    CorpusError,
    ProviderError,
    ProviderStageFailed,
    StageOrderError,
)
from .metrics import FORMATS, render_report
from .pipeline import REPORT_FILES, Pipeline
from .runstore import load_run, verify_run

logger = logging.getLogger("bugrepro")

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_PROVIDER, EXIT_ADAPTER = 0, 1, 2, 3, 4


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, CorpusError, StageOrderError)):
        return EXIT_CONFIG
    if isinstance(exc, (ProviderError, ProviderStageFailed)):
        return EXIT_PROVIDER
    if isinstance(exc, (AdapterError, AdapterStageFailed)):
        return EXIT_ADAPTER
    return EXIT_INTERNAL


def _existing_run(args) -> Pipeline:
    store = load_run(args.run_dir)
    config = Config.from_snapshot(store.config)
    if getattr(args, "workers", None):
        config.workers = args.workers
    return Pipeline(store, config)


def cmd_corpus(args) -> int:
    corpus = load_corpus(args.path, args.projects)
    if args.action == "validate":
        drops = sum(len(e.dropped) for e in corpus.dedup_log)
        for w in corpus.warnings:
            print(f"warning: {w}", file=sys.stderr)
        print(f"ok: {len(corpus.reports)} reports in {len(corpus.projects)} projects, "
              f"{drops} duplicate(s) dropped, {len(corpus.warnings)} warning(s)")
    else:
        rows = corpus_stats(corpus)
        print("project,reports")
        for name, n in rows:
            print(f"{name},{n}")
        print(f"Total,{sum(n for _, n in rows)}")
    return EXIT_OK


def cmd_run(args) -> int:
    config = load_config(args.config, corpus=args.corpus, samples_per_report=args.samples,
                         workers=args.workers)
    if config.corpus is None:
        raise ConfigError("no corpus given (use --corpus or [run] corpus)")
    pipe = Pipeline.open(args.out, config)
    if args.command == "generate":
        pipe.generate()
        return EXIT_OK
    table = pipe.run_all()
    sys.stdout.write(render_report(table, args.format))
    return EXIT_OK


def cmd_stage(args) -> int:
    pipe = _existing_run(args)
    pipe.run_stage(args.command)
    if args.command == "report":
        text = pipe.store.read_text(REPORT_FILES[args.format])
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    findings = verify_run(args.run_dir)
    for f in findings:
        print(f)
    if not findings:
        print("ok")
    return EXIT_OK if not findings else EXIT_INTERNAL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bugrepro", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("corpus", help="validate a corpus or print per-project counts")
    c.add_argument("action", choices=("validate", "stats"))
    c.add_argument("path")
    c.add_argument("--projects", help="project metadata file")
    c.set_defaults(func=cmd_corpus)

    for name, help_ in (("generate", "query the provider for every report"),
                        ("run", "run the whole pipeline")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="configuration file")
        s.add_argument("--corpus", help="corpus file (overrides config)")
        s.add_argument("--out", "--run-dir", dest="out", required=True, help="run directory")
        s.add_argument("--samples", type=int, help="samples per report")
        s.add_argument("--workers", type=int)
        s.add_argument("--format", choices=FORMATS, default="csv")
        s.set_defaults(func=cmd_run)

    for name in ("extract", "evaluate", "classify", "report"):
        s = sub.add_parser(name, help=f"run the {name} stage on an existing run")
        s.add_argument("--run-dir", required=True)
        s.add_argument("--workers", type=int)
        if name == "report":
            s.add_argument("--format", choices=FORMATS, default="csv")
            s.add_argument("--out", help="write the report here instead of stdout")
        s.set_defaults(func=cmd_stage)

    v = sub.add_parser("verify", help="audit a run directory against its manifest")
    v.add_argument("--run-dir", required=True)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except BugReproError as exc:
        logger.error("%s", exc)
        return exit_code_for(exc)
    except FileNotFoundError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except Exception:
        logger.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

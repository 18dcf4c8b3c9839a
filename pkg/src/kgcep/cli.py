"""``kgcep`` command line: generate, split, train, evaluate, correlate and sweep.

Machine-readable results go to stdout (or ``--out``); progress and
diagnostics go to stderr. Exit codes: 0 success, 1 usage error,
2 data or validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .cep import MULTIPLIERS, ClusterConfig, evaluate_cep
from .datagen import ShapeSpec, generate, save_generated
from .kg import DEFAULT_RATIOS, EVAL_SPLITS, SPLITS, KGError, derive_labels, load_kg, parse_triples, parse_types, save_kg, split_dataset
from .lp import LPConfig, evaluate_lp
from .model import MODEL_KINDS, TrainConfig, load_model, save_model
from .sweep import correlation_csv, emit_reports, load_sweep_csv, load_sweep_spec, run_sweep
from .train import TrainingDiverged, train

log = logging.getLogger("kgcep")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _default_threads():
    try:
        return max(1, int(os.environ.get("KGCEP_THREADS", "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=0, help="random seed (default: %(default)s)")
    g.add_argument("--out", default=None, help="output path; stdout when omitted where applicable")
    g.add_argument("--quiet", action="store_true", help="suppress progress on stderr")
    g.add_argument("--threads", type=int, default=_default_threads(),
                   help="worker processes (default: $KGCEP_THREADS or 1, now %(default)s)")

    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = _Parser(prog="kgcep", description="KG embedding training with link-prediction and clustering evaluation.")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("gen", parents=[common], formatter_class=fmt,
                       help="generate a synthetic categorised KG (--out DIR required)")
    s.add_argument("--shape", choices=("ontology", "ehr"), default="ontology")
    s.add_argument("--subjects", type=int, default=None, help="subject entities (shape default if omitted)")
    s.add_argument("--partners", type=int, default=None, help="many-to-many partner entities")
    s.add_argument("--labels", type=_ints, default=None, help="label cardinalities, comma-separated")
    s.add_argument("--density", type=float, default=None, help="partner links per subject")
    s.add_argument("--noise", type=float, default=0.0, help="noise rate in [0, 1)")
    s.add_argument("--ratios", type=_floats, default=DEFAULT_RATIOS, help="LRN,VLD,TUN,TST")

    s = sub.add_parser("split", parents=[common], formatter_class=fmt,
                       help="split a triple TSV into LRN/VLD/TUN/TST (--out DIR required)")
    s.add_argument("--input", required=True, help="triples, 'head<TAB>relation<TAB>tail' with name:Type tokens")
    s.add_argument("--types", default=None, help="optional 'entity<TAB>Type' sidecar for bare names")
    s.add_argument("--ratios", type=_floats, default=DEFAULT_RATIOS, help="LRN,VLD,TUN,TST")

    s = sub.add_parser("train", parents=[common], formatter_class=fmt,
                       help="train an embedding model (--out FILE required)")
    s.add_argument("--kg", required=True, help="dataset directory")
    s.add_argument("--model", choices=MODEL_KINDS, default="transE")
    s.add_argument("--k", type=int, default=32, help="embedding dimension")
    s.add_argument("--gamma", type=float, default=2.0, help="margin")
    s.add_argument("--lr", type=float, default=0.01, help="learning rate")
    s.add_argument("--epochs", type=int, default=1000)
    s.add_argument("--replicas", type=int, default=1)
    s.add_argument("--untyped", action="store_true", help="corrupt from all entities instead of same-type ones")
    s.add_argument("--eval-every", type=int, default=25, help="epochs between TUN evaluations")
    s.add_argument("--log", default=None, help="write the training log JSON here")

    s = sub.add_parser("eval-lp", parents=[common], formatter_class=fmt,
                       help="link-prediction report as JSON")
    s.add_argument("--model", required=True)
    s.add_argument("--kg", required=True)
    s.add_argument("--split", choices=EVAL_SPLITS + ("LRN",), default="TST")
    s.add_argument("--scope", choices=("auto", "typed", "global"), default="auto")
    s.add_argument("--filter", choices=("raw", "filtered"), default="raw")
    s.add_argument("--sides", choices=("head", "tail", "both"), default="both")
    s.add_argument("--hits", type=_ints, default=(10,), help="hits@N levels")

    s = sub.add_parser("eval-cep", parents=[common], formatter_class=fmt,
                       help="clustering report as JSON")
    s.add_argument("--model", required=True)
    s.add_argument("--kg", required=True)
    s.add_argument("--relation", required=True, help="many-to-one relation that supplies the labels")
    s.add_argument("--multiplier", type=int, choices=MULTIPLIERS, default=4)
    s.add_argument("--max-iterations", type=int, default=100)
    s.add_argument("--n-init", type=int, default=10, help="k-means restarts (lowest WCSS kept)")
    s.add_argument("--histogram", default=None, help="write the cluster/label histogram CSV here")

    s = sub.add_parser("correlate", parents=[common], formatter_class=fmt,
                       help="correlation CSV from a sweep CSV")
    s.add_argument("--sweep", required=True, help="sweep.csv written by the sweep command")
    s.add_argument("--dataset", default="dataset", help="dataset label for the output rows")

    s = sub.add_parser("sweep", parents=[common], formatter_class=fmt,
                       help="run a hyperparameter sweep from a TOML file")
    s.add_argument("--config", required=True, help="sweep TOML file")
    return p


def _emit(args, text: str):
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


def _require_out(args):
    if not args.out:
        raise UsageError(f"{args.command}: --out is required")


def cmd_gen(args):
    _require_out(args)
    kw = {"seed": args.seed, "noise_rate": args.noise, "ratios": args.ratios}
    for key, val in (("n_subjects", args.subjects), ("n_partners", args.partners),
                     ("label_cardinalities", args.labels), ("density", args.density)):
        if val is not None:
            kw[key] = val
    spec = ShapeSpec.ehr(**kw) if args.shape == "ehr" else ShapeSpec(**kw)
    gen = generate(spec)
    save_generated(gen, args.out)
    log.info("wrote %s: %s", args.out, {s: len(gen.kg[s]) for s in SPLITS})


def cmd_split(args):
    _require_out(args)
    base = None
    if args.types:
        with open(args.types, encoding="utf-8") as f:
            base = parse_types(f)
    with open(args.input, encoding="utf-8") as f:
        dictionary, triples = parse_triples(f, "build", base)
    kg = split_dataset(triples, args.ratios, args.seed, dictionary)
    save_kg(kg, args.out, seed=args.seed, ratios=args.ratios)
    log.info("wrote %s: %s", args.out, {s: len(kg[s]) for s in SPLITS})


def cmd_train(args):
    _require_out(args)
    kg = load_kg(args.kg)
    config = TrainConfig(k=args.k, gamma=args.gamma, learning_rate=args.lr, max_epochs=args.epochs,
                         replicas=args.replicas, seed=args.seed, model_kind=args.model,
                         typed=not args.untyped, eval_every=args.eval_every)
    model, tlog = train(kg, config)
    save_model(model, args.out, config, kg.dictionary.digest())
    if args.log:
        with open(args.log, "w", encoding="utf-8") as f:
            json.dump(tlog.to_dict(), f, indent=1)
            f.write("\n")
    log.info("saved %s (replica %d, TUN MRR %.4f)", args.out, tlog.selected, model.meta["tuning_mrr"])


def cmd_eval_lp(args):
    kg = load_kg(args.kg)
    model = load_model(args.model, kg.dictionary.digest())
    config = LPConfig(candidate_scope=None if args.scope == "auto" else args.scope,
                      filter_mode=args.filter, sides=args.sides, hits_levels=args.hits)
    report = evaluate_lp(model, kg, args.split, config)
    _emit(args, report.to_json() + "\n")


def cmd_eval_cep(args):
    kg = load_kg(args.kg)
    model = load_model(args.model, kg.dictionary.digest())
    labels = derive_labels(kg, args.relation)
    names = kg.dictionary.entity_names
    config = ClusterConfig(multiplier=args.multiplier, max_iterations=args.max_iterations,
                           seed=args.seed, n_init=args.n_init)
    report = evaluate_cep(model, labels, config, [names[e] for e in labels.label_entities], args.relation)
    if args.histogram:
        with open(args.histogram, "w", encoding="utf-8") as f:
            f.write(report.histogram_csv())
    _emit(args, report.to_json() + "\n")


def cmd_correlate(args):
    with open(args.sweep, encoding="utf-8") as f:
        table = load_sweep_csv(f.read(), args.dataset)
    if not table.targets:
        raise KGError(f"{args.sweep}: no aMean/wMean columns")
    _emit(args, correlation_csv(table))


def cmd_sweep(args):
    spec = load_sweep_spec(args.config, output=args.out)

    def progress(i, row):
        log.info("row %d %s: %s", i + 1, row.model_id, row.status)

    table = run_sweep(spec, threads=args.threads, progress=progress)
    paths = emit_reports(table, spec.output)
    sys.stdout.write(json.dumps(paths, indent=2, sort_keys=True) + "\n")


COMMANDS = {"gen": cmd_gen, "split": cmd_split, "train": cmd_train, "eval-lp": cmd_eval_lp,
            "eval-cep": cmd_eval_cep, "correlate": cmd_correlate, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    if args.threads < 1:
        print("kgcep: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"kgcep: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"kgcep: training diverged: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ArithmeticError as exc:
        print(f"kgcep: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"kgcep: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

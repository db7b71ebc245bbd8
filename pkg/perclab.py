"""
perclab command line.

    python perclab.py walk return_probability --config exp.cfg --out p.csv
    python perclab.py verify two_ghost --config ghost.cfg --format json
    python perclab.py sweep --config tail.cfg --axis p --values 0.3,0.4,0.5
    python perclab.py build-graph --set graph.family=torus --set graph.dims=5,5

Experiment files use flat `section.key = value` lines; --set applies the same
syntax on the command line and wins over the file.
"""
import argparse
import json
import sys

import lab
from config import (ExperimentSpec, MASK64, SpecError, load_flat_config, parse_flat_config,
                    parse_value)
from report import write_atomic

GROUPS = ('walk', 'spectral', 'perc', 'verify')


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment file (section.key = value lines)")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config entry (repeatable)")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--format", choices=lab.OUTPUT_FORMATS, help="output format")
    common.add_argument("--seed", type=lambda s: int(s, 0), help="master seed (u64)")
    common.add_argument("--replicas", type=int, help="replica count (never changes results)")
    common.add_argument("--workers", type=int, help="worker processes (default: all cores)")
    common.add_argument("--verbose", action="store_true", help="print progress lines")

    parser = argparse.ArgumentParser(prog="perclab", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("build-graph", parents=[common], help="write a graph as an edge list")
    for group in ('walk', 'spectral', 'perc'):
        p = sub.add_parser(group, parents=[common], help=f"run a {group} task")
        p.add_argument("task", nargs="?", help=", ".join(lab.tasks_in(group)))
    p = sub.add_parser("verify", parents=[common], help="run an inequality / identity check")
    p.add_argument("check", help=", ".join(lab.tasks_in('verify')))
    p = sub.add_parser("sweep", parents=[common], help="run a task over a parameter grid")
    p.add_argument("task", nargs="?")
    p.add_argument("--axis", required=True, help="numeric task parameter, e.g. p or n")
    p.add_argument("--values", required=True, help="comma-separated values")
    return parser


def load_sections(args):
    sections = load_flat_config(args.config) if args.config else {}
    overrides = parse_flat_config("\n".join(args.set))
    for section, entries in overrides.items():
        sections.setdefault(section, {}).update(entries)
    sampling = sections.setdefault('sampling', {})
    output = sections.setdefault('output', {})
    if args.seed is not None:
        sampling['master_seed'] = args.seed & MASK64
    if args.replicas is not None:
        sampling['replicas'] = args.replicas
    if args.workers is not None:
        sampling['workers'] = args.workers
    if args.format is not None:
        output['format'] = args.format
    if args.out is not None:
        output['path'] = args.out
    return sections


def spec_for(args, sections):
    name = getattr(args, 'check', None) or getattr(args, 'task', None)
    if name:
        sections.setdefault('task', {})['name'] = name
    spec = ExperimentSpec.from_sections(sections)
    group = args.command if args.command in GROUPS else None
    if group and lab.lookup(spec.task).group != group:
        raise SpecError(f"{spec.task!r} is not a {group} task; "
                        f"{group} tasks: {', '.join(lab.tasks_in(group))}")
    return spec


def _fail(exc):
    record = lab.error_record(exc)
    sys.stderr.write(json.dumps(record) + "\n")
    return record['exit_code']


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        sections = load_sections(args)
        if args.command == 'build-graph':
            text = lab.build_graph_text(sections.get('graph', {}))
            if args.out:
                write_atomic(args.out, text)
                print(f"Generated {args.out}")
            else:
                sys.stdout.write(text)
            return 0
        spec = spec_for(args, sections)
    except Exception as e:
        return _fail(e)

    if args.command == 'sweep':
        values = parse_value(args.values) if args.values.strip() else []
        values = values if isinstance(values, list) else [values]
        return lab.sweep(spec, args.axis, values, verbose=args.verbose)
    return lab.run(spec, verbose=args.verbose)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end; every command is a thin call into the service.

Exit codes: 0 success, 1 a verification suite reported failures, 2 usage or
input errors (bad flags, unreadable files, malformed descriptors).
"""

from __future__ import annotations

import argparse
import sys

from .client import ServiceClient, detail_of
from .verify import SUITE_NAMES

_CONFIG_KEYS = {
    "arch", "data", "eval-data", "out-dir", "epochs", "batch", "lr",
    "seed", "repeats", "milestones", "gamma", "momentum", "weight-decay",
}


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="polyblocks",
        description="Polynomial classifier blocks: verification, counting, data tools, training.",
    )
    p.add_argument("--server", default=None, metavar="URL",
                   help="service URL; by default the service runs in-process")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("--suite", choices=SUITE_NAMES, default="all")
    v.add_argument("--seed", type=int, default=0)

    c = sub.add_parser("count-params", help="count trainable parameters of an architecture")
    c.add_argument("--arch", required=True, help="builtin name or descriptor file")

    m = sub.add_parser("make-dataset", help="create or resample a dataset file")
    m.add_argument("--synth", nargs=3, type=int, metavar=("D", "N_PER_CLASS", "SEED"),
                   help="generate the synthetic quadratic-boundary task")
    m.add_argument("--limit", type=int, metavar="M", help="keep M samples per class")
    m.add_argument("--longtail", type=float, metavar="IF", help="resample to this imbalance factor")
    m.add_argument("--in", dest="src", metavar="FILE", help="input dataset for --limit/--longtail")
    m.add_argument("--out", required=True, metavar="FILE")
    m.add_argument("--seed", type=int, default=0, help="sampling seed for --limit/--longtail")

    t = sub.add_parser("train", help="train one or more runs and write artifacts")
    t.add_argument("--arch", default=None)
    t.add_argument("--data", default=None)
    t.add_argument("--eval-data", default=None)
    t.add_argument("--out-dir", default=None)
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--batch", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--milestones", default=None, help="comma-separated epoch list")
    t.add_argument("--gamma", type=float, default=None)
    t.add_argument("--momentum", type=float, default=None)
    t.add_argument("--weight-decay", type=float, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--repeats", type=int, default=None)
    t.add_argument("--config", default=None, metavar="FILE",
                   help="key = value lines supplying any unset flag")

    e = sub.add_parser("eval", help="score a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)

    r = sub.add_parser("report", help="aggregate run groups into one CSV")
    r.add_argument("--runs", required=True, metavar="DIR")
    r.add_argument("--out", default=None, metavar="FILE", help="also write the CSV here")

    s = sub.add_parser("serve", help="run the HTTP service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    return p


def _fail(parser: argparse.ArgumentParser, msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return 2


def _read_config(path: str) -> dict:
    values = {}
    with open(path) as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, eq, value = line.partition("=")
            key = key.strip().lower()
            if not eq or key not in _CONFIG_KEYS:
                raise ValueError(f"{path} line {line_no}: expected '<key> = <value>', got {raw.rstrip()!r}")
            values[key] = value.strip()
    return values


def _merged(args, config: dict, key: str, cast=str, default=None):
    flag = getattr(args, key.replace("-", "_"))
    if flag is not None:
        return flag
    if key in config:
        return cast(config[key])
    return default


def cmd_verify(client: ServiceClient, args) -> int:
    status, body = client.post("/verify", {"suite": args.suite, "seed": args.seed})
    if status != 200:
        print(f"error: {detail_of(body)}", file=sys.stderr)
        return 2
    for row in body["checks"]:
        mark = "PASS" if row["passed"] else "FAIL"
        measured = "n/a" if row["measured"] is None else f"{row['measured']:.3e}"
        extra = f"  ({row['detail']})" if row.get("detail") else ""
        print(f"{mark} {row['name']}: measured {measured} bound {row['bound']:.3e}{extra}")
    failed = sum(1 for row in body["checks"] if not row["passed"])
    print(f"suite: {body['suite']}")
    print(f"checks: {len(body['checks'])}")
    print(f"failed: {failed}")
    return 0 if body["passed"] else 1


def cmd_count_params(client: ServiceClient, args) -> int:
    status, body = client.post("/count-params", {"arch": _maybe_file(args.arch)})
    if status != 200:
        print(f"error: {detail_of(body)}", file=sys.stderr)
        return 2
    print(f"name: {body['name']}")
    print(f"params: {body['params']}")
    print(f"millions: {body['millions']}")
    return 0


def _maybe_file(arch: str) -> str:
    """Send descriptor files as text so a remote service needs no shared disk."""
    import os

    if "\n" not in arch and os.path.isfile(arch):
        with open(arch) as f:
            return f.read()
    return arch


def cmd_make_dataset(parser, client: ServiceClient, args) -> int:
    chosen = [x for x in (args.synth, args.limit, args.longtail) if x is not None]
    if len(chosen) != 1:
        return _fail(parser, "choose exactly one of --synth, --limit, --longtail")
    if args.synth is not None:
        d, n, seed = args.synth
        status, body = client.post(
            "/datasets/synth", {"d": d, "n_per_class": n, "seed": seed, "out": args.out}
        )
    else:
        if not args.src:
            return _fail(parser, "--limit/--longtail need --in FILE")
        if args.limit is not None:
            payload = {"src": args.src, "m": args.limit, "seed": args.seed, "out": args.out}
            status, body = client.post("/datasets/subsample", payload)
        else:
            payload = {"src": args.src, "ratio": args.longtail, "seed": args.seed, "out": args.out}
            status, body = client.post("/datasets/longtail", payload)
    if status != 200:
        print(f"error: {detail_of(body)}", file=sys.stderr)
        return 2
    print(f"path: {body['path']}")
    print(f"classes: {body['classes']}")
    print(f"samples: {body['samples']}")
    print(f"counts: {' '.join(str(c) for c in body['counts'])}")
    return 0


def cmd_train(parser, client: ServiceClient, args) -> int:
    try:
        config = _read_config(args.config) if args.config else {}
    except (OSError, ValueError) as e:
        return _fail(parser, str(e))
    arch = _merged(args, config, "arch")
    data = _merged(args, config, "data")
    out_dir = _merged(args, config, "out-dir")
    if not arch or not data or not out_dir:
        return _fail(parser, "train needs --arch, --data and --out-dir (flags or config)")
    payload = {
        "arch": _maybe_file(arch),
        "data": data,
        "out_dir": out_dir,
        "eval_data": _merged(args, config, "eval-data"),
        "seed": _merged(args, config, "seed", int, 0),
        "repeats": _merged(args, config, "repeats", int, 1),
        "epochs": _merged(args, config, "epochs", int),
        "batch": _merged(args, config, "batch", int),
        "lr0": _merged(args, config, "lr", float),
        "gamma": _merged(args, config, "gamma", float),
        "momentum": _merged(args, config, "momentum", float),
        "weight_decay": _merged(args, config, "weight-decay", float),
    }
    milestones = _merged(args, config, "milestones")
    if milestones is not None:
        try:
            payload["milestones"] = [int(x) for x in str(milestones).split(",") if x.strip()]
        except ValueError:
            return _fail(parser, f"bad --milestones value {milestones!r}")
    status, body = client.post("/train", payload)
    if status != 200:
        print(f"error: {detail_of(body)}", file=sys.stderr)
        return 2
    print(f"label: {body['label']}")
    print(f"runs: {len(body['runs'])}")
    for row in body["runs"]:
        r = row["run"]
        print(f"run{r}.seed: {row['seed']}")
        print(f"run{r}.csv: {row['csv']}")
        print(f"run{r}.checkpoint: {row['checkpoint']}")
        print(f"run{r}.final_train_acc: {row['final_train_acc']:.12g}")
        print(f"run{r}.final_eval_acc: {row['final_eval_acc']:.12g}")
    print(f"mean_eval_acc: {body['mean_eval_acc']:.12g}")
    print(f"std_eval_acc: {body['std_eval_acc']:.12g}")
    return 0


def cmd_eval(client: ServiceClient, args) -> int:
    status, body = client.post("/eval", {"checkpoint": args.checkpoint, "data": args.data})
    if status != 200:
        print(f"error: {detail_of(body)}", file=sys.stderr)
        return 2
    print(f"accuracy: {body['accuracy']:.12g}")
    print(f"samples: {body['samples']}")
    return 0


def cmd_report(client: ServiceClient, args) -> int:
    status, body = client.post("/report", {"runs_dir": args.runs})
    if status != 200:
        print(f"error: {detail_of(body)}", file=sys.stderr)
        return 2
    if args.out:
        with open(args.out, "w") as f:
            f.write(body["csv"])
    print(body["csv"], end="")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "serve":
        return cmd_serve(args)
    try:
        client = ServiceClient(args.server)
    except Exception as e:  # unreachable in-process; remote URL typos land here
        print(f"error: {e}", file=sys.stderr)
        return 2
    try:
        if args.command == "verify":
            return cmd_verify(client, args)
        if args.command == "count-params":
            return cmd_count_params(client, args)
        if args.command == "make-dataset":
            return cmd_make_dataset(parser, client, args)
        if args.command == "train":
            return cmd_train(parser, client, args)
        if args.command == "eval":
            return cmd_eval(client, args)
        if args.command == "report":
            return cmd_report(client, args)
    except Exception as e:  # connection failures against --server, mostly
        print(f"error: {e}", file=sys.stderr)
        return 2
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())

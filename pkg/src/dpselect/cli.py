"""Command-line entry point: ``dpselect <subcommand>``.

Exit codes: 0 success, 2 invalid input or configuration, 3 protocol abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench
from .config import CONFIG_KEYS, ConfigError, config_from_values, format_config, parse_config_text
from .iss import pack_share_matrix, unpack_share_matrix
from .protocol import PartyStreams, ServerRole, check_binary, run_protocol, server_main, \
    share_all_clients
from .transport import ProtocolAbort, TcpEndpoint

EXIT_OK, EXIT_INVALID, EXIT_ABORT = 0, 2, 3


def _config_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("protocol parameters (override --config)")
    g.add_argument("--config", type=Path, help="key=value config file")
    g.add_argument("--epsilon", type=float)
    g.add_argument("--trunc-bits", type=int)
    g.add_argument("--servers", type=int)
    g.add_argument("--corrupt", type=int)
    g.add_argument("--kappa", type=int)
    g.add_argument("--dims", type=int)
    g.add_argument("--ring-bits", type=int)
    g.add_argument("--noise-cap-bits", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--clients", type=int)


def _config_values(args) -> dict:
    values = parse_config_text(args.config.read_text()) if args.config else {}
    for key in CONFIG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return values


def read_clients(path) -> np.ndarray:
    """Client vectors as CSV, one 0/1 row per client."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rows.append([int(v) for v in line.split(",")])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: cannot parse client row") from None
    if len({len(r) for r in rows}) > 1:
        raise ValueError(f"{path}: client rows have different lengths")
    return check_binary(np.array(rows, dtype=np.int64))


def _inputs(args, values):
    if args.input:
        x = read_clients(args.input)
        values.setdefault("clients", x.shape[0])
        values.setdefault("dims", x.shape[1])
        return x
    n, d = values.get("clients"), values.get("dims")
    if not n or not d:
        raise ValueError("give --input or both --clients and --dims for random inputs")
    rng = np.random.default_rng(np.random.SeedSequence(values.get("seed", 0), spawn_key=(7,)))
    return bench.uniform_clients(rng, n, d)


def cmd_share(args) -> int:
    values = _config_values(args)
    x = read_clients(args.input)
    values["clients"], values["dims"] = x.shape
    cfg = config_from_values(values)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    per_server = share_all_clients(x, cfg, PartyStreams(cfg.seed))
    for i, shares in enumerate(per_server):
        (out / f"server_{i}.shares").write_bytes(pack_share_matrix(np.stack(shares)))
    session = {k: getattr(cfg, k) for k in ("epsilon", "trunc_bits", "servers", "corrupt",
                                            "kappa", "dims", "ring_bits", "noise_cap_bits",
                                            "seed", "clients")}
    (out / "session.cfg").write_text(format_config(session))
    print(f"wrote shares for {cfg.h} computing servers to {out}")
    return EXIT_OK


def cmd_serve(args) -> int:
    cfg = config_from_values(_config_values(args))
    role = ServerRole.of(args.id, cfg)
    if args.role != role.kind:
        raise ValueError(f"server {args.id} is a {role.kind} server, not {args.role}")
    shares = []
    if role.computing:
        path = Path(args.shares_dir) / f"server_{args.id}.shares"
        shares = list(unpack_share_matrix(path.read_bytes()))
        if len(shares) != cfg.n:
            raise ValueError(f"{path} holds {len(shares)} clients, config says {cfg.n}")
    addresses = [(args.host, args.port + i) for i in range(cfg.k)]
    ep = TcpEndpoint(args.id, addresses, timeout=args.timeout)
    try:
        out = server_main(args.id, ep, cfg, shares, PartyStreams(cfg.seed))
    finally:
        ep.close()
    result = {"server": args.id, "role": role.kind, "index": out.index,
              "stats": vars(out.stats)}
    print(json.dumps(result, default=int))
    return EXIT_OK


def cmd_run_sim(args) -> int:
    values = _config_values(args)
    x = _inputs(args, values)
    cfg = config_from_values(values)
    res = run_protocol(x, cfg, transport=args.transport)
    report = {"index": res.index, "plain_argmax": int(np.argmax(x.sum(axis=0))),
              "ring_bits": cfg.a, "noise_cap_bits": cfg.noise_cap_bits,
              **res.stats.as_dict(), "wall_seconds": round(res.wall_seconds, 6)}
    print(json.dumps(report, default=int))
    return EXIT_OK


def _floats(text):
    return [float(v) for v in text.split(",") if v]


def _ints(text):
    return [int(v) for v in text.split(",") if v]


def cmd_bench_utility(args) -> int:
    bc = bench.BenchConfig(dataset=args.dataset, d=args.d, epsilons=_floats(args.epsilons),
                           runs=args.runs, alpha=args.alpha,
                           mechanisms=args.mechanisms.split(","), seed=args.seed,
                           trunc_bits=args.trunc_bits, servers=args.servers,
                           full_protocol=args.full_protocol)
    rows = bench.run_utility_sweep(bc)
    bench.emit_plotdata(rows, args.out, kind="utility")
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


def cmd_bench_cost(args) -> int:
    sweep = bench.run_cost_sweep(_ints(args.dims), _ints(args.ring_bits), servers=args.servers,
                                 clients=args.clients, epsilon=args.epsilon, seed=args.seed,
                                 transport=args.transport)
    bench.emit_plotdata(sweep.rows, args.out, kind="cost")
    for d, a, msg in sweep.failures:
        print(f"point d={d} a={a} failed: {msg}", file=sys.stderr)
    print(f"wrote {len(sweep.rows)} rows to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpselect", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("share", help="secret-share client vectors into per-server files")
    _config_flags(p)
    p.add_argument("--input", required=True, help="CSV of 0/1 client rows")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_share)

    p = sub.add_parser("serve", help="run one server over TCP")
    _config_flags(p)
    p.add_argument("--role", choices=["computing", "supporting"], required=True)
    p.add_argument("--id", type=int, required=True)
    p.add_argument("--port", type=int, required=True, help="base port; server i listens on port+i")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--shares-dir", default=".")
    p.add_argument("--timeout", type=float, default=60.0)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("run-sim", help="run every party in-process")
    _config_flags(p)
    p.add_argument("--input", help="CSV of 0/1 client rows (default: random)")
    p.add_argument("--transport", choices=["sim", "tcp"], default="sim")
    p.set_defaults(func=cmd_run_sim)

    p = sub.add_parser("bench-utility", help="error of selection mechanisms over an epsilon grid")
    p.add_argument("--dataset", default="synthetic:hepth",
                   help="histogram CSV path, synthetic:hepth or synthetic:uniform:<n>")
    p.add_argument("--d", type=int, default=1024)
    p.add_argument("--epsilons", default="0.02,0.04,0.06,0.08,0.1,0.12,0.14,0.16,0.18,0.2")
    p.add_argument("--runs", type=int, default=1000)
    p.add_argument("--alpha", type=float)
    p.add_argument("--mechanisms", default=",".join(bench.MECHANISMS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trunc-bits", type=int, default=0)
    p.add_argument("--servers", type=int, default=3)
    p.add_argument("--full-protocol", action="store_true",
                   help="run the MPC protocol instead of the ideal functionality")
    p.add_argument("--out", default="utility.csv")
    p.set_defaults(func=cmd_bench_utility)

    p = sub.add_parser("bench-cost", help="protocol communication over (d, a) grids")
    p.add_argument("--dims", default="16,1024,2048")
    p.add_argument("--ring-bits", default="5,10,15,20,25")
    p.add_argument("--servers", type=int, default=3)
    p.add_argument("--clients", type=int, default=8)
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--transport", choices=["sim", "tcp"], default="sim")
    p.add_argument("--out", default="cost.csv")
    p.set_defaults(func=cmd_bench_cost)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ProtocolAbort as exc:
        print(f"protocol abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

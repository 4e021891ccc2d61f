"""Command-line front end: ``simulate``, ``demo`` and ``overhead``."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .crypto import get_backend
from .errors import InvalidInput, PartstoreError
from .network import Network
from .protocol import MessageKind, PeerActor, Server, UserDevice, confirm_recovery, initiate_recovery
from .sharing import split_rates
from .simulation import FIGURES, ScenarioConfig, csv_text, figure_configs, run_experiment
from .storage import Chatroom, PeerKeys, baseline_chat_key_bytes, estimate_overhead


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("true", "yes", "1"):
        return True
    if v in ("false", "no", "0"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _on_off(text: str) -> bool:
    v = text.strip().lower()
    if v not in ("on", "off"):
        raise argparse.ArgumentTypeError(f"expected on or off, got {text!r}")
    return v == "on"


def _rate(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"rate must lie in (0, 1], got {v}")
    return v


def _fraction(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 <= v <= 1:
        raise argparse.ArgumentTypeError(f"fraction must lie in [0, 1], got {v}")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _count(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {v}")
    return v


def _default_seed() -> int:
    raw = os.environ.get("PARTSTORE_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="partstore", description="Partitioned key storage with social recovery.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run reconstruction-rate sweeps and write CSV")
    sim.add_argument("--figure", type=int, choices=FIGURES, help="run a preset sweep")
    sim.add_argument("--parts", type=_positive, help="number of StorageParts p")
    sim.add_argument("--q", type=_positive, help="parts needed to rebuild the Storage (default: p)")
    sim.add_argument("--t-target", type=_rate, default=0.7, help="target threshold rate (default 0.7)")
    sim.add_argument("--trials", type=_positive, default=10_000, help="trials per configuration")
    sim.add_argument("--seed", type=int, default=None, help="master seed (default: $PARTSTORE_SEED or 0)")
    sim.add_argument("--jobs", type=_positive, default=1, help="worker processes")
    sim.add_argument("--unique-peers", type=_bool, default=False, metavar="{true,false}", help="one part-level share per distinct peer")
    sim.add_argument("--ts", type=_on_off, default=True, metavar="{on,off}", help="also distribute the flat TS shares")
    sim.add_argument("--inactive-rate", type=_fraction, default=None, help="fraction of peers offline (default: 1 - t-target)")
    sim.add_argument("--engine", choices=("kernel", "protocol"), default="kernel", help="share counting or full message protocol")
    sim.add_argument("--crypto", choices=("test", "production"), default="test", help="crypto backend for the protocol engine")
    sim.add_argument("-o", "--output", help="CSV path (default: standard output)")

    demo = sub.add_parser("demo", help="print one recovery trace")
    demo.add_argument("--chats", type=_positive, default=3)
    demo.add_argument("--peers", type=_positive, default=4)
    demo.add_argument("--parts", type=_positive, default=2)
    demo.add_argument("--q", type=_positive, default=None)
    demo.add_argument("--t-target", type=_rate, default=0.5)
    demo.add_argument("--unique-peers", type=_bool, default=True, metavar="{true,false}")
    demo.add_argument("--ts", type=_on_off, default=True, metavar="{on,off}")
    demo.add_argument("--inactive", default="", help="comma-separated peer ids, or 'all'")
    demo.add_argument("--confirmers", type=_positive, default=1, help="confirmations the server requires")
    demo.add_argument("--skip-confirmation", action="store_true", help="never confirm the recovery out of band")
    demo.add_argument("--crypto", choices=("test", "production"), default="production")
    demo.add_argument("--seed", type=int, default=None)

    over = sub.add_parser("overhead", help="storage overhead of partitioning")
    over.add_argument("--parts", type=_positive, required=True)
    over.add_argument("--peers", type=_count, default=70)
    over.add_argument("--chats", type=_count, default=60)
    return parser


def cmd_simulate(args, parser) -> int:
    seed = _default_seed() if args.seed is None else args.seed
    try:
        if args.figure is not None:
            configs = figure_configs(args.figure, args.trials, seed)
        else:
            if args.parts is None:
                parser.error("simulate needs --parts or --figure")
            q = args.q if args.q is not None else args.parts
            configs = [
                ScenarioConfig(args.parts, q, args.t_target, args.unique_peers, args.ts, args.trials, seed, args.inactive_rate)
            ]
        if args.inactive_rate is not None and args.figure is not None:
            configs = [ScenarioConfig(c.parts, c.q, c.t_target, c.unique_peers, c.ts_enabled, c.trials, seed, args.inactive_rate) for c in configs]
    except InvalidInput as exc:
        parser.error(str(exc))
    reports = run_experiment(configs, jobs=args.jobs, engine=args.engine, crypto=args.crypto)
    text = csv_text(reports)
    if args.output:
        with open(args.output, "w", newline="") as fh:
            fh.write(text)
        for rep in reports:
            c = rep.config
            print(
                f"p={c.parts:<3} q={c.q:<3} t={c.t_target:g} unique={str(c.unique_peers).lower():<5} ts={'on' if c.ts_enabled else 'off':<3} "
                f"r={rep.r:.3f} r75={rep.r75:.3f} r50={rep.r50:.3f} r25={rep.r25:.3f} ra={rep.ra:.3f}"
            )
        print(f"wrote {len(reports)} rows to {args.output}")
    else:
        sys.stdout.write(text)
    return 0


def demo_layout(n_chats: int, n_peers: int) -> list[list[int]]:
    """Small overlapping chats: peer i sits in chat i mod n, even peers also in the next one."""
    rooms = []
    for j in range(n_chats):
        members = {j % n_peers}
        for i in range(n_peers):
            if i % n_chats == j or (i % 2 == 0 and (i + 1) % n_chats == j):
                members.add(i)
        rooms.append(sorted(members))
    return rooms


def cmd_demo(args, parser) -> int:
    q = args.q if args.q is not None else args.parts
    if q > args.parts:
        parser.error("--q cannot exceed --parts")
    if args.parts > args.chats:
        parser.error("--parts cannot exceed --chats")
    names = [f"p{i + 1}" for i in range(args.peers)]
    if args.inactive.strip().lower() == "all":
        inactive = set(names)
    else:
        inactive = {x.strip() for x in args.inactive.split(",") if x.strip()}
        unknown = inactive - set(names)
        if unknown:
            parser.error(f"unknown peers in --inactive: {', '.join(sorted(unknown))}")
    seed = _default_seed() if args.seed is None else args.seed
    backend = get_backend(args.crypto, seed=seed)
    rng = np.random.default_rng(seed)
    rates = split_rates(args.t_target, args.parts, q)

    server = Server(backend)
    peers: dict[str, PeerActor] = {}
    for name in names:
        peers[name] = PeerActor(name, backend, backend.generate_enc_pair(), backend.generate_sig_pair())
        server.register_user(name, peers[name].storage.enc_pair.public, peers[name].storage.sig_pair.public)
    chatrooms = []
    for j, members in enumerate(demo_layout(args.chats, args.peers)):
        room = Chatroom(f"chat-{j + 1}", ("u",) + tuple(names[i] for i in members), [backend.random_key()])
        chatrooms.append(room)
        for i in members:
            peers[names[i]].join(room)
        print(f"{room.id}: {', '.join(room.participants)}")

    peer_keys = {n: PeerKeys(a.storage.enc_pair.public, a.storage.sig_pair.public) for n, a in peers.items()}
    try:
        device = UserDevice.create("u", b"correct horse battery staple", chatrooms, args.parts, backend, peer_keys)
        device.register(server)
        dist = device.distribute(server, rates, args.unique_peers, rng, args.ts)
    except PartstoreError as exc:
        print(f"distribution failed: {exc}")
        return 1
    print(
        f"distributed {len(dist.messages)} shares: q={dist.quorum}/{args.parts}, "
        f"part thresholds {dist.part_thresholds}, TS threshold {dist.ts_threshold}"
    )
    original_storage = device.storage.to_dict()
    original_parts = {p.id: p.to_dict() for p in device.parts}

    net = Network(server, trace=True)
    for actor in peers.values():
        net.add_peer(actor)
    net.send_all(dist.messages)
    net.run()
    for name in sorted(inactive):
        peers[name].active = False
    if inactive:
        print(f"inactive: {', '.join(sorted(inactive))}")

    print("--- user lost the password and starts recovery ---")
    net.log = []
    session, init = initiate_recovery(server, "u", True, backend, args.confirmers)
    net.record(init)
    if args.skip_confirmation:
        print("no out-of-band confirmation given")
    else:
        active_peers = [p for p in session.peers if peers[p].active]
        for name in active_peers[: args.confirmers]:
            net.record(confirm_recovery(peers[name], server, session.rid, session.signed_rid()))
        if not active_peers:
            print("no active peer can confirm the recovery")
    net.attach(session)
    net.send_all(session.recovery_requests())
    net.run()

    for msg in net.log:
        print(msg.describe())
    for name, actor in peers.items():
        if session.rid in actor.parked:
            print(f"{name} withholds its shares: no RecoveryConfirmed for {session.rid}")

    released = sum(1 for m in net.log if m.kind is MessageKind.SHARE_DELIVERY)
    print(f"shares released: {released}; parts recovered: {len(session.recovered_parts)}/{args.parts}")
    if not session.recovered:
        print("NOT RECOVERED")
        return 1
    same = session.storage.to_dict() == original_storage and all(
        session.recovered_parts[k].to_dict() == v for k, v in original_parts.items()
    )
    route = " and ".join(sorted(session.routes))
    print(f"RECOVERED via {route}; storage identical to original: {'yes' if same else 'no'}")
    return 0 if same else 1


def cmd_overhead(args, parser) -> int:
    extra = estimate_overhead(args.parts, args.peers)
    baseline = baseline_chat_key_bytes(args.chats)
    print(f"partitioned overhead: {extra} bytes ({args.parts} parts, {args.peers} peers)")
    print(f"baseline: {baseline} bytes ({args.chats} chat keys)")
    if baseline:
        print(f"ratio: {extra / baseline:.4f}")
    return 0


COMMANDS = {"simulate": cmd_simulate, "demo": cmd_demo, "overhead": cmd_overhead}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return COMMANDS[args.command](args, parser)


if __name__ == "__main__":
    sys.exit(main())

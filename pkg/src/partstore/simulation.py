"""Monte-Carlo reconstruction-rate experiments.

Each trial draws a synthetic chat population, distributes shares, knocks out a
fraction of the peer pool and asks whether the Storage (or some of its parts)
can still be rebuilt. Two engines answer that question:

``protocol``
    runs the real distribution and recovery messages through :class:`Network`
    with the fast crypto backend. Faithful but slow (tens of ms per trial).
``kernel``
    counts reachable shares per part directly on index arrays. It consumes the
    same random substreams as the protocol engine, so both give the same
    outcome for the same ``(master_seed, trial_index)``.
"""

from __future__ import annotations

import csv
import functools
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .crypto import get_backend
from .errors import InvalidInput, PartstoreError
from .network import Network
from .protocol import PeerActor, Server, UserDevice, confirm_recovery, initiate_recovery
from .sharing import MAX_SHARES, ThresholdRates, compute_threshold, split_rates
from .storage import Chatroom, PeerKeys

log = logging.getLogger(__name__)

USER = "u"
CSV_COLUMNS = ["parts", "q", "t_target", "unique_peers", "ts_enabled", "inactive_rate", "trials", "seed", "r", "r75", "r50", "r25", "ra"]
# chat sizes count the user too; a size-2 chat has a single peer
SIZE_WEIGHTS = (0.715, 0.114, 0.069, 0.102)
SIZE_RANGES = ((2, 2), (3, 5), (6, 10), (11, 20))
FIGURES = (3, 4, 5, 6)


@dataclass(frozen=True)
class PopulationSpec:
    n_chats: int = 60
    peer_pool: int = 70
    size_weights: tuple = SIZE_WEIGHTS
    size_ranges: tuple = SIZE_RANGES

    def __post_init__(self):
        if self.n_chats < 1 or self.peer_pool < 1:
            raise InvalidInput("population needs at least one chat and one peer")
        if len(self.size_weights) != len(self.size_ranges):
            raise InvalidInput("one weight per size range")
        if abs(sum(self.size_weights) - 1.0) > 1e-9 or min(self.size_weights) < 0:
            raise InvalidInput("size weights must be a probability vector")
        for lo, hi in self.size_ranges:
            if not 2 <= lo <= hi:
                raise InvalidInput(f"bad chat size range {lo}..{hi}")

    @property
    def max_peers(self) -> int:
        return min(self.peer_pool, max(hi for _, hi in self.size_ranges) - 1)


@dataclass(frozen=True)
class ScenarioConfig:
    parts: int
    q: int
    t_target: float
    unique_peers: bool = False
    ts_enabled: bool = True
    trials: int = 10_000
    master_seed: int = 0
    inactive_rate: float | None = None  # None: 1 - t_target
    population: PopulationSpec = field(default_factory=PopulationSpec)

    def __post_init__(self):
        if not 1 <= self.parts <= MAX_SHARES:
            raise InvalidInput(f"parts must lie in 1..{MAX_SHARES}")
        if not 1 <= self.q <= self.parts:
            raise InvalidInput(f"need 1 <= q <= parts, got q={self.q}, parts={self.parts}")
        if not 0 < self.t_target <= 1:
            raise InvalidInput(f"t_target must lie in (0, 1], got {self.t_target}")
        if self.trials < 1:
            raise InvalidInput("trials must be at least 1")
        if self.inactive_rate is not None and not 0 <= self.inactive_rate <= 1:
            raise InvalidInput(f"inactive_rate must lie in [0, 1], got {self.inactive_rate}")

    @property
    def rate_inactive(self) -> float:
        if self.inactive_rate is not None:
            return self.inactive_rate
        return round(1.0 - self.t_target, 12)

    @property
    def rates(self) -> ThresholdRates:
        return split_rates(self.t_target, self.parts, self.q)


@dataclass(frozen=True)
class TrialOutcome:
    full: bool
    parts_fraction: float


@dataclass(frozen=True)
class Population:
    """Chats as rows of peer indices into ``range(peer_pool)``."""

    spec: PopulationSpec
    chats: tuple

    def matrix(self, width: int | None = None) -> np.ndarray:
        width = width or self.spec.max_peers
        out = np.full((len(self.chats), width), -1, dtype=np.int64)
        for j, peers in enumerate(self.chats):
            out[j, : len(peers)] = peers
        return out

    def touched(self) -> set:
        return {int(p) for chat in self.chats for p in chat}


@dataclass(frozen=True)
class RateReport:
    config: ScenarioConfig
    trials: int
    n_full: int
    n75: int
    n50: int
    n25: int

    @property
    def r(self) -> float:
        return self.n_full / self.trials

    @property
    def r75(self) -> float:
        return self.n75 / self.trials

    @property
    def r50(self) -> float:
        return self.n50 / self.trials

    @property
    def r25(self) -> float:
        return self.n25 / self.trials

    @property
    def ra(self) -> float:
        return self.r + self.r75 + self.r50 + self.r25

    @property
    def n_zero(self) -> int:
        return self.trials - self.n_full - self.n75 - self.n50 - self.n25

    def row(self) -> dict:
        c = self.config
        return {
            "parts": c.parts,
            "q": c.q,
            "t_target": f"{c.t_target:g}",
            "unique_peers": str(c.unique_peers).lower(),
            "ts_enabled": str(c.ts_enabled).lower(),
            "inactive_rate": f"{c.rate_inactive:.5f}",
            "trials": self.trials,
            "seed": c.master_seed,
            "r": f"{self.r:.5f}",
            "r75": f"{self.r75:.5f}",
            "r50": f"{self.r50:.5f}",
            "r25": f"{self.r25:.5f}",
            "ra": f"{self.ra:.5f}",
        }


# ---------------------------------------------------------------------------
# randomness


def trial_streams(master_seed: int, trial_index: int):
    """Independent generators for population, activity and protocol crypto."""
    seq = np.random.SeedSequence([int(master_seed) & (2**64 - 1), int(trial_index)])
    return [np.random.default_rng(s) for s in seq.spawn(3)]


def generate_population(spec: PopulationSpec, rng) -> Population:
    category = rng.choice(len(spec.size_weights), size=spec.n_chats, p=np.asarray(spec.size_weights))
    lo = np.array([r[0] for r in spec.size_ranges])[category]
    hi = np.array([r[1] for r in spec.size_ranges])[category]
    sizes = rng.integers(lo, hi + 1)
    n_peers = np.minimum(sizes - 1, spec.peer_pool)
    order = np.argsort(rng.random((spec.n_chats, spec.peer_pool)), axis=1)
    chats = tuple(tuple(int(p) for p in np.sort(order[j, : n_peers[j]])) for j in range(spec.n_chats))
    return Population(spec, chats)


def mark_inactive(n_peers: int, inactive_rate: float, rng) -> np.ndarray:
    """Activity mask with exactly ``round(rate * n)`` peers switched off."""
    if not 0 <= inactive_rate <= 1:
        raise InvalidInput(f"inactive_rate must lie in [0, 1], got {inactive_rate}")
    active = np.ones(n_peers, dtype=bool)
    k = int(np.floor(inactive_rate * n_peers + 0.5))
    active[rng.permutation(n_peers)[:k]] = False
    return active


def _draw(config: ScenarioConfig, trial_index: int):
    pop_rng, act_rng, crypto_rng = trial_streams(config.master_seed, trial_index)
    population = generate_population(config.population, pop_rng)
    active = mark_inactive(config.population.peer_pool, config.rate_inactive, act_rng)
    return population, active, crypto_rng


# ---------------------------------------------------------------------------
# engines


def peer_name(i: int) -> str:
    return f"p{i}"


def chat_name(j: int) -> str:
    return f"chat-{j:03d}"


def build_world(population: Population, backend, server: Server):
    """Key material, chatrooms and peer actors for one population."""
    peers = {}
    for i in range(population.spec.peer_pool):
        actor = PeerActor(peer_name(i), backend, backend.generate_enc_pair(), backend.generate_sig_pair())
        server.register_user(actor.id, actor.storage.enc_pair.public, actor.storage.sig_pair.public)
        peers[actor.id] = actor
    chatrooms = []
    for j, members in enumerate(population.chats):
        room = Chatroom(chat_name(j), (USER,) + tuple(peer_name(i) for i in members), [backend.random_key()])
        chatrooms.append(room)
        for i in members:
            peers[peer_name(i)].join(room)
    return peers, chatrooms


def run_protocol_trial(config: ScenarioConfig, population: Population, active: np.ndarray, crypto_rng, crypto: str = "test") -> TrialOutcome:
    backend = get_backend(crypto, seed=int(crypto_rng.integers(2**63)))
    server = Server(backend)
    peers, chatrooms = build_world(population, backend, server)
    peer_keys = {pid: PeerKeys(a.storage.enc_pair.public, a.storage.sig_pair.public) for pid, a in peers.items()}
    device = UserDevice.create(USER, b"trial-password", chatrooms, config.parts, backend, peer_keys)
    device.register(server)
    dist = device.distribute(server, config.rates, config.unique_peers, crypto_rng, config.ts_enabled)

    net = Network(server)
    for actor in peers.values():
        net.add_peer(actor)
    net.send_all(dist.messages)
    net.run()

    for i, on in enumerate(active):
        peers[peer_name(i)].active = bool(on)
    session, _ = initiate_recovery(server, USER, True, backend)
    confirmers = [p for p in session.peers if peers[p].active]
    if confirmers:
        confirm_recovery(peers[confirmers[0]], server, session.rid, session.signed_rid())
    net.attach(session)
    net.send_all(session.recovery_requests())
    net.run()
    if session.recovered:
        return TrialOutcome(True, 1.0)
    return TrialOutcome(False, len(session.recovered_parts) / config.parts)


def run_trial(config: ScenarioConfig, trial_index: int, crypto: str = "test") -> TrialOutcome:
    """One trial through the full protocol; protocol errors count as failure."""
    population, active, crypto_rng = _draw(config, trial_index)
    try:
        return run_protocol_trial(config, population, active, crypto_rng, crypto)
    except PartstoreError as exc:
        log.debug("trial %d failed: %s", trial_index, exc)
        return TrialOutcome(False, 0.0)


def threshold_tables(config: ScenarioConfig):
    rates = config.rates
    top = config.population.n_chats * config.population.max_peers
    part_thr = np.array([0] + [compute_threshold(rates.t_storage_part, n) for n in range(1, top + 1)], dtype=np.int64)
    ts_thr = np.array([0] + [compute_threshold(rates.t_target, n) for n in range(1, config.population.peer_pool + 1)], dtype=np.int64)
    return part_thr, ts_thr


@functools.lru_cache(maxsize=16)
def draw_batch(spec: PopulationSpec, master_seed: int, inactive_rate: float, lo: int, hi: int):
    """Padded peer matrices and activity masks for trials ``lo..hi-1``.

    Cached because figure sweeps reuse one population set across many configs.
    """
    width = spec.max_peers
    chat_peers = np.empty((hi - lo, spec.n_chats, width), dtype=np.int64)
    active = np.empty((hi - lo, spec.peer_pool), dtype=bool)
    for row, idx in enumerate(range(lo, hi)):
        pop_rng, act_rng, _ = trial_streams(master_seed, idx)
        chat_peers[row] = generate_population(spec, pop_rng).matrix(width)
        active[row] = mark_inactive(spec.peer_pool, inactive_rate, act_rng)
    chat_peers.flags.writeable = False
    active.flags.writeable = False
    return chat_peers, active


def kernel_trials(config: ScenarioConfig, indices, crypto: str = "test") -> list[TrialOutcome]:
    indices = list(indices)
    if not indices:
        return []
    lo, hi = indices[0], indices[-1] + 1
    if indices != list(range(lo, hi)):
        raise InvalidInput("kernel engine needs a contiguous trial range")
    chat_peers, active = draw_batch(config.population, config.master_seed, config.rate_inactive, lo, hi)
    part_thr, ts_thr = threshold_tables(config)
    ok, full = kernels.count_trials(chat_peers, active, config.parts, config.q, config.unique_peers, config.ts_enabled, part_thr, ts_thr)
    return [TrialOutcome(True, 1.0) if f else TrialOutcome(False, int(k) / config.parts) for k, f in zip(ok, full)]


def protocol_trials(config: ScenarioConfig, indices, crypto: str = "test") -> list[TrialOutcome]:
    return [run_trial(config, i, crypto) for i in indices]


ENGINES = {"kernel": kernel_trials, "protocol": protocol_trials}


# ---------------------------------------------------------------------------
# aggregation


def bucketize(outcomes) -> tuple[int, int, int, int]:
    """Counts ``(full, 75, 50, 25)``; trials with nothing recovered are left out."""
    outcomes = list(outcomes)
    if not outcomes:
        raise InvalidInput("no outcomes to bucketize")
    n_full = n75 = n50 = n25 = 0
    for o in outcomes:
        f = o.parts_fraction
        if o.full:
            n_full += 1
        elif 0.5 < f < 1:
            n75 += 1
        elif 0.25 < f <= 0.5:
            n50 += 1
        elif 0 < f <= 0.25:
            n25 += 1
    return n_full, n75, n50, n25


def report(config: ScenarioConfig, outcomes) -> RateReport:
    outcomes = list(outcomes)
    return RateReport(config, len(outcomes), *bucketize(outcomes))


def _chunk(args):
    config, engine, crypto, lo, hi = args
    return ENGINES[engine](config, range(lo, hi), crypto)


def run_config(config: ScenarioConfig, jobs: int = 1, engine: str = "kernel", crypto: str = "test", chunk: int = 2000) -> RateReport:
    if engine not in ENGINES:
        raise InvalidInput(f"unknown engine {engine!r}")
    bounds = [(lo, min(lo + chunk, config.trials)) for lo in range(0, config.trials, chunk)]
    tasks = [(config, engine, crypto, lo, hi) for lo, hi in bounds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_chunk, tasks))
    else:
        parts = [_chunk(t) for t in tasks]
    return report(config, [o for part in parts for o in part])


def run_experiment(configs, jobs: int = 1, engine: str = "kernel", crypto: str = "test") -> list[RateReport]:
    return [run_config(c, jobs, engine, crypto) for c in configs]


def figure_configs(figure: int, trials: int = 10_000, seed: int = 0) -> list[ScenarioConfig]:
    def cfg(p, q=None, t=0.7, unique=False, ts=True):
        return ScenarioConfig(p, p if q is None else q, t, unique, ts, trials, seed)

    if figure == 3:
        return [cfg(p, unique=u, ts=False) for p in range(1, 9) for u in (True, False)]
    if figure == 4:
        return [cfg(p, ts=ts) for p in (1, 2, 4, 8, 12, 16, 20) for ts in (False, True)]
    if figure == 5:
        return [cfg(p, q) for p in (8, 12, 16) for q in (p, p - 1, p - 2)]
    if figure == 6:
        return [cfg(p, t=t) for t in (0.9, 0.7) for p in (1, 2, 4, 8, 12)]
    raise InvalidInput(f"no preset for figure {figure}; choose from {FIGURES}")


def write_csv(reports, out) -> None:
    writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for rep in reports:
        writer.writerow(rep.row())


def csv_text(reports) -> str:
    buf = io.StringIO()
    write_csv(reports, buf)
    return buf.getvalue()


def with_seed(configs, seed: int):
    return [replace(c, master_seed=seed) for c in configs]

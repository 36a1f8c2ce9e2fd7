"""Multi-hop flows over a node graph, merged into one scheduling problem.

A flow follows a fixed node path; the last node is its sink and every earlier
node holds a relay buffer for it, so a flow with path length L has h = L-1
service hops.  A job carries one end-to-end remaining lifetime: it enters hop
1 with tau = deadline, advances at most one hop per slot (a success at hop j
moves it to hop j+1 with its remaining time unchanged by the move), and every
job still in flight decrements once at slot end no matter where it sits.
Success at the last hop is delivery.  Each serving node k charges its own
resource meter E_k and carries its own multiplier, so the per-slot reward is

    r = sum_i weight_i * delivered_i - sum_k lam_k * E_k.

The merged observation is [buffers..., channels...] in (flow, hop) order,
each buffer section deadline+1 wide; the merged action uses the same layout.
Per-(flow,hop) channels are independent sources.

Stream discipline mirrors the single-hop environment: child streams are
spawned in (arrivals per flow, channels per flow-major hop, service) order
and service draws consume one uniform per buffered servable job in
(flow, hop, bucket, job) order.  A single-node network with one hop per flow
therefore consumes randomness identically to SingleHopEnv and reproduces its
trajectories exactly under equal seeds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllocationError, ConfigError
from .service import success_probability

__all__ = ["FlowSpec", "NodeBudget", "MultiHopOutcome", "MultiHopEnv"]


@dataclass
class FlowSpec:
    """One flow: path through the graph, deadline, weight, per-hop physics."""

    index: int                  # 1-based flow id
    path: tuple                 # full node sequence, sink last (>= 2 nodes)
    deadline: int
    weight: float
    arrivals: object            # arrival source at the first hop
    channels: list              # one channel source per service hop
    distances: list             # one distance figure per service hop

    def __post_init__(self):
        self.path = tuple(self.path)
        if self.index < 1:
            raise ConfigError(f"flow index must be >= 1, got {self.index}")
        if len(self.path) < 2:
            raise ConfigError(f"flow {self.index}: path needs >= 2 nodes, got {self.path}")
        if len(set(self.path)) != len(self.path):
            raise ConfigError(f"flow {self.index}: path nodes must be distinct")
        if self.deadline < 1:
            raise ConfigError(f"flow {self.index}: deadline must be >= 1")
        if self.weight < 0:
            raise ConfigError(f"flow {self.index}: weight must be >= 0")
        if len(self.channels) != self.hops or len(self.distances) != self.hops:
            raise ConfigError(
                f"flow {self.index}: needs one channel and distance per service hop "
                f"({self.hops}), got {len(self.channels)} and {len(self.distances)}")
        if any(d <= 0 for d in self.distances):
            raise ConfigError(f"flow {self.index}: distances must be > 0")

    @property
    def hops(self):
        return len(self.path) - 1

    @property
    def service_nodes(self):
        return self.path[:-1]


@dataclass(frozen=True)
class NodeBudget:
    """Average resource budget and current multiplier for one serving node."""

    node: int
    limit: float
    multiplier: float = 0.0

    def __post_init__(self):
        if self.limit < 0:
            raise ConfigError(f"node {self.node}: budget must be >= 0")
        if self.multiplier < 0:
            raise ConfigError(f"node {self.node}: multiplier must be >= 0")


@dataclass
class MultiHopOutcome:
    slot: int
    buffers: list               # decision-time [flow][hop] -> count vector
    arrivals: np.ndarray        # per flow
    channels: list              # decision-time [flow][hop] -> level
    allocation: list
    delivered: np.ndarray       # per flow
    expired: np.ndarray         # per flow, any hop
    throughput: float
    resource_per_node: dict     # node -> E_k
    resource: float             # total over nodes
    reward: float
    observation: np.ndarray


class MultiHopEnv:
    def __init__(self, flows, e_max=2.0, seed=0, success_model=None,
                 observe_buffers=True, observe_channels=True):
        if not flows:
            raise ConfigError("need at least one flow")
        indices = [f.index for f in flows]
        if indices != list(range(1, len(flows) + 1)):
            raise ConfigError(f"flow indices must be 1..N in order, got {indices}")
        if e_max <= 0 or not np.isfinite(e_max):
            raise ConfigError(f"e_max must be finite and > 0, got {e_max}")
        if not (observe_buffers or observe_channels):
            raise ConfigError("observation must include at least one component")
        self.flows = list(flows)
        self.e_max = float(e_max)
        self.seed = int(seed)
        self.success_model = success_model if success_model is not None else success_probability
        self.observe_buffers = observe_buffers
        self.observe_channels = observe_channels
        self.service_nodes = sorted({n for f in self.flows for n in f.service_nodes})
        self._episode = -1
        self._slot = None

    # -- layout --

    @property
    def n_flows(self):
        return len(self.flows)

    @property
    def _n_pairs(self):
        return sum(f.hops for f in self.flows)

    @property
    def action_dim(self):
        return sum(f.hops * (f.deadline + 1) for f in self.flows)

    @property
    def obs_dim(self):
        dim = 0
        if self.observe_buffers:
            dim += self.action_dim
        if self.observe_channels:
            dim += self._n_pairs
        return dim

    def split_action(self, flat):
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.action_dim,):
            raise AllocationError(
                f"flat allocation must have shape ({self.action_dim},), got {flat.shape}")
        out, k = [], 0
        for f in self.flows:
            width = f.deadline + 1
            out.append([flat[k + j * width:k + (j + 1) * width].copy()
                        for j in range(f.hops)])
            k += f.hops * width
        return out

    def flatten_action(self, structured):
        return np.concatenate([np.asarray(a, dtype=float)
                               for per_flow in structured for a in per_flow])

    def _validate_action(self, action):
        if isinstance(action, np.ndarray) and action.ndim == 1:
            action = self.split_action(action)
        if len(action) != self.n_flows:
            raise AllocationError(
                f"allocation must cover {self.n_flows} flows, got {len(action)}")
        checked = []
        for f, per_flow in zip(self.flows, action):
            if len(per_flow) != f.hops:
                raise AllocationError(
                    f"flow {f.index}: allocation must cover {f.hops} hops on its "
                    f"path, got {len(per_flow)}")
            rows = []
            for j, a in enumerate(per_flow):
                a = np.asarray(a, dtype=float)
                if a.shape != (f.deadline + 1,):
                    raise AllocationError(
                        f"flow {f.index} hop {j + 1}: allocation must have length "
                        f"{f.deadline + 1}, got {a.shape}")
                if not np.all(np.isfinite(a)) or np.any(a < 0):
                    raise AllocationError(
                        f"flow {f.index} hop {j + 1}: allocation entries must be "
                        f"finite and >= 0")
                if np.any(a > self.e_max):
                    raise AllocationError(
                        f"flow {f.index} hop {j + 1}: entry {a.max():g} exceeds "
                        f"e_max {self.e_max:g}")
                rows.append(a.copy())
            checked.append(rows)
        return checked

    def _multiplier_map(self, multipliers):
        if multipliers is None:
            return {n: 0.0 for n in self.service_nodes}
        if np.isscalar(multipliers):
            return {n: float(multipliers) for n in self.service_nodes}
        table = {n: 0.0 for n in self.service_nodes}
        for node, lam in dict(multipliers).items():
            if node not in table:
                raise ConfigError(f"multiplier given for non-serving node {node}")
            if lam < 0:
                raise ConfigError(f"node {node}: multiplier must be >= 0")
            table[node] = float(lam)
        return table

    # -- lifecycle --

    def fork(self, seed):
        return MultiHopEnv(self.flows, e_max=self.e_max, seed=seed,
                           success_model=self.success_model,
                           observe_buffers=self.observe_buffers,
                           observe_channels=self.observe_channels)

    def reset(self, seed=None):
        if seed is not None:
            self.seed = int(seed)
            self._episode = -1
        self._episode += 1
        root = np.random.SeedSequence(entropy=self.seed, spawn_key=(self._episode,))
        n = self.n_flows
        children = root.spawn(n + self._n_pairs + 1)
        for f, ss in zip(self.flows, children[:n]):
            f.arrivals.reset(ss)
        k = n
        for f in self.flows:
            for ch in f.channels:
                ch.reset(children[k])
                k += 1
        self._svc_rng = np.random.Generator(np.random.Philox(children[k]))
        self.buffers = [[np.zeros(f.deadline + 1, dtype=np.int64) for _ in range(f.hops)]
                        for f in self.flows]
        self._slot = 0
        self._begin_slot()
        return self.observe()

    def _begin_slot(self):
        self.arrivals = np.array([f.arrivals.sample(self._slot) for f in self.flows],
                                 dtype=np.int64)
        for i, f in enumerate(self.flows):
            self.buffers[i][0][f.deadline] += self.arrivals[i]
        self.channels = [[ch.sample(self._slot) for ch in f.channels] for f in self.flows]

    def observe(self):
        parts = []
        if self.observe_buffers:
            for i, f in enumerate(self.flows):
                parts.extend(np.asarray(b, dtype=float) for b in self.buffers[i])
        if self.observe_channels:
            parts.append(np.array([c for per_flow in self.channels for c in per_flow],
                                  dtype=float))
        return np.concatenate(parts)

    @property
    def slot(self):
        return self._slot

    def step(self, action, multipliers=None):
        if self._slot is None:
            raise RuntimeError("call reset() before step()")
        action = self._validate_action(action)
        lam = self._multiplier_map(multipliers)
        snapshot_buffers = [[b.copy() for b in per_flow] for per_flow in self.buffers]
        snapshot_channels = [list(per_flow) for per_flow in self.channels]
        snapshot_arrivals = self.arrivals.copy()
        delivered = np.zeros(self.n_flows, dtype=np.int64)
        expired = np.zeros(self.n_flows, dtype=np.int64)
        resource_per_node = {n: 0.0 for n in self.service_nodes}
        for i, f in enumerate(self.flows):
            staged = [np.zeros(f.deadline + 1, dtype=np.int64) for _ in range(f.hops)]
            for j in range(f.hops):
                buf = self.buffers[i][j]
                alloc = action[i][j]
                resource_per_node[f.path[j]] += float(alloc @ buf)
                probs = np.asarray(
                    self.success_model(alloc, self.channels[i][j], f.distances[j]),
                    dtype=float)
                counts = buf[1:]
                total = int(counts.sum())
                hits = np.zeros(f.deadline + 1, dtype=np.int64)
                if total:
                    draws = self._svc_rng.random(total)
                    bucket_of = np.repeat(np.arange(1, f.deadline + 1), counts)
                    success = draws < probs[bucket_of]
                    hits = np.bincount(bucket_of[success], minlength=f.deadline + 1)
                if j + 1 < f.hops:
                    staged[j + 1] += hits          # movers join after the pass
                else:
                    delivered[i] += int(hits.sum())
                self.buffers[i][j] = buf - hits
            for j in range(f.hops):
                buf = self.buffers[i][j] + staged[j]
                expired[i] += int(buf[1])
                shifted = np.zeros_like(buf)
                shifted[1:f.deadline] = buf[2:]
                self.buffers[i][j] = shifted
        weights = np.array([f.weight for f in self.flows])
        throughput = float(weights @ delivered)
        resource = float(sum(resource_per_node.values()))
        reward = throughput - float(
            sum(lam[n] * resource_per_node[n] for n in self.service_nodes))
        self._slot += 1
        self._begin_slot()
        return MultiHopOutcome(
            slot=self._slot - 1,
            buffers=snapshot_buffers,
            arrivals=snapshot_arrivals,
            channels=snapshot_channels,
            allocation=action,
            delivered=delivered,
            expired=expired,
            throughput=throughput,
            resource_per_node=resource_per_node,
            resource=resource,
            reward=reward,
            observation=self.observe(),
        )

"""Flows over multi-hop paths, per-node budgets, and the one-hop reduction.

Run: python3 demos/09_multihop.py
"""

import numpy as np

from schedlab import (BernoulliArrivals, FlowSpec, MarkovChannel, MultiHopEnv,
                      SingleHopEnv, UserSpec, build_environment,
                      multihop_preset)


def main():
    print("preset network: 12 flows over three routes\n")
    config = multihop_preset()
    env = build_environment(config["environment"], seed=0)
    paths = sorted({tuple(f.path) for f in env.flows})
    for p in paths:
        n = sum(1 for f in env.flows if tuple(f.path) == p)
        print(f"  route {'-'.join(map(str, p))}: {n} flows, "
              f"{len(p) - 1} service hops")
    budgets = config["dual"]["budgets"][0]
    print(f"  service nodes {env.service_nodes}, per-node budgets {budgets}")

    env.reset()
    rng = np.random.default_rng(0)
    delivered = expired = 0
    spend = {k: 0.0 for k in env.service_nodes}
    slots = 2000
    for _ in range(slots):
        action = [[rng.uniform(0.0, env.e_max, f.deadline + 1)
                   for _ in range(f.hops)] for f in env.flows]
        out = env.step(action)
        delivered += int(out.delivered.sum())
        expired += int(out.expired.sum())
        for k, v in out.resource_per_node.items():
            spend[k] += v
    print(f"\nrandom allocations for {slots} slots: "
          f"delivered {delivered}, expired {expired}")
    for k in env.service_nodes:
        print(f"  node {k}: average spend {spend[k] / slots:.2f}/slot")
    print("  a job must clear every hop before its lifetime runs out; "
          "jobs whose\n  remaining time cannot cover the remaining hops are "
          "already lost.")

    print("\none-hop reduction: a single 2-node flow is the single-hop "
          "model exactly")
    user = UserSpec(index=1, deadline=1, weight=1.0, distance=1.0,
                    arrivals=BernoulliArrivals(0.5),
                    channel=MarkovChannel(levels=(1.0, 2.0), mean=1.5,
                                          persistence=0.5))
    single = SingleHopEnv([user], e_max=1.0, seed=9)
    flow = FlowSpec(index=1, path=(1, 2), deadline=1, weight=1.0,
                    arrivals=BernoulliArrivals(0.5),
                    channels=[MarkovChannel(levels=(1.0, 2.0), mean=1.5,
                                            persistence=0.5)],
                    distances=[1.0])
    multi = MultiHopEnv([flow], e_max=1.0, seed=9)
    single.reset()
    multi.reset()
    same = True
    for _ in range(500):
        flat = rng.uniform(0.0, 1.0, single.action_dim)
        out_s = single.step([flat], lam=0.5)
        out_m = multi.step([[flat]], multipliers=0.5)
        same &= (out_s.reward == out_m.reward
                 and np.array_equal(out_s.observation, out_m.observation))
    print(f"  500 shared-action slots, identical rewards and observations: "
          f"{same}")


if __name__ == "__main__":
    main()

"""Walk through one private selection from client shares to the opened index.

Run with ``python3 demos/protocol_walkthrough.py``.
"""

import numpy as np

from dpselect import (PartyStreams, ProtocolConfig, audit_corrupted_view, ideal_functionality,
                      run_protocol)
from dpselect.iss import IssConfig, reconstruct_int, share_int


def section(title):
    print(f"\n== {title}")


rng = np.random.default_rng(2024)

section("clients")
# 40 clients each vote for one of 8 items; item 5 is the most popular
votes = rng.choice(8, size=40, p=[0.05, 0.1, 0.1, 0.1, 0.1, 0.3, 0.15, 0.1])
x = np.zeros((40, 8), dtype=int)
x[np.arange(40), votes] = 1
print("true counts:", x.sum(axis=0).tolist())

section("integer secret sharing")
shares = share_int(x[0], IssConfig(h=2, kappa=40, ell=1), rng)
for s in shares:
    print(f"server {s.server_id} holds", s.shares[:4], "...")
print("reconstructed:", reconstruct_int(shares).tolist(), "(client 0 voted", votes[0], ")")

section("configuration")
cfg = ProtocolConfig(epsilon=1.0, trunc_bits=1, servers=3, dims=8, clients=40, seed=7)
print(f"k={cfg.k} servers, t={cfg.t} corrupt, h={cfg.h} computing")
print(f"ring Z_2^{cfg.a}, noise below 2^{cfg.noise_cap_bits}, preprocessing by {cfg.preprocessing}")
for note in cfg.notes:
    print("note:", note)

section("one protocol run")
res = run_protocol(x, cfg, record=True)
print("opened index:", res.index)
for key, value in res.stats.as_dict().items():
    print(f"  {key:15s} {value}")

section("the oracle replays the same randomness")
want, leak = ideal_functionality(x, cfg, streams=PartyStreams(cfg.seed))
print("oracle index:", want, "| matches:", want == res.index)
print("noise a corrupted server 0 learns about itself:", leak.leaked_noise[0].tolist())

section("what a corrupted computing server saw")
view = audit_corrupted_view(res, [0])
print("frames received:", dict(view.received))
print("masked comparison openings:", view.masked_openings, "| index openings:", view.index_openings)
print("audit clean:", view.ok)

section("repeated runs")
picks = np.bincount([run_protocol(x, cfg, seed=s).index for s in range(200)], minlength=8)
print("selection frequency over 200 seeds:", picks.tolist())

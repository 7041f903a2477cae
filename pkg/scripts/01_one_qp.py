"""
One controller step by hand
===========================

Build the rows for a follower behind a slower leader and solve the QP.
"""

from trustcbf.controller import PeerView, build_constraints, solve_qp
from trustcbf.model import ControlParams, Kind

cfg = ControlParams(c_peer=0.1)

# leader 20 m ahead, 3 m/s slower
leader = PeerView(vid=1, kind=Kind.REAR_END, x=100.0, v=12.0, tau=1.0)
rows = build_constraints((80.0, 9.0), [leader], cfg, v_ref=cfg.v_max)
for r in rows:
    print(f"{r.kind.value:>9}: {r.a_u:+.3f} u {r.a_e:+.1f} e {r.rhs:+.4f} {r.sense} 0")

res = solve_qp(0.0, rows, cfg.lam)
print("u =", round(res.u, 4), "slack =", round(res.e, 4), res.status)

# %%
# Lower trust shrinks the class-K term. At zero trust the row asks only that
# the barrier does not decrease.
for tau in (1.0, 0.5, 0.0):
    row = build_constraints((80.0, 9.0), [PeerView(1, Kind.REAR_END, 100.0, 12.0, tau)],
                            cfg, cfg.v_max)[0]
    print(f"tau={tau:.1f}: u <= {row.rhs / 1.8:.4f}")

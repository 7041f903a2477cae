"""
Trust of a fake vehicle
=======================

A Sybil identity cruises consistently for two seconds, then reports a
braking manoeuvre no car can perform. Its trust collapses and the
observation window flags it.
"""

import dataclasses

import numpy as np

from trustcbf.sim import run
from trustcbf.suites import detection_case

cfg = detection_case(3)
cfg = dataclasses.replace(cfg, sim=dataclasses.replace(cfg.sim, record=True))
trace, summary = run(cfg)

fakes = [vid for vid, r in trace.vehicles.items() if r["fake"]]
for vid in fakes:
    rec = trace.vehicles[vid]
    print(f"fake {vid}: first failing check at tick {rec['first_fail']}, detected at tick {rec['detected']}")
    tau = np.array([(row[1], row[10]) for row in trace.rows if row[2] == vid])
    for t, v in tau[:: len(tau) // 8]:
        print(f"  t={t:5.2f}s  tau={v:.4f}")

# %%
# With gamma = 0.9 per tick old evidence fades within a fraction of a second,
# so tau climbs again once the halted fake reports a consistent standstill.
# Detection is latched and is not undone by the recovery.
print("detections:", summary["detections"])

"""
A stalled fake and the rescheduler
==================================

A fake halts on one approach. Without mitigation its followers wait behind a
car that is not there; with mitigation they are requeued and overtake.
"""

from trustcbf.sim import run
from trustcbf.suites import blocking_case

for label, kw in [("no attack", dict(attack=False)),
                  ("attack, mitigation on", dict(attack=True, mitigation=True)),
                  ("attack, mitigation off", dict(attack=True, mitigation=False))]:
    _, s = run(blocking_case(0, **kw))
    print(f"{label:>24}: mean travel time {s['mean_travel_time']:.2f}s, "
          f"never exited {s['holdup']}, violations {s['violations']}")

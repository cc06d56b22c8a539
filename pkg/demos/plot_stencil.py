"""
Processes against threads in a halo exchange
============================================

A 1-D five-point stencil spans two nodes.  On one node we place 16
single-threaded processes, or one process with 16 threads, or a mix.
Every thread owns its endpoints in each case, so the only
difference is how many halo messages cross the node boundary.
"""

from verbsim.endpoints import build_stencil
from verbsim.sim import default_params, run_sim

params = default_params()
rates = {}
for procs in (16, 8, 4, 2, 1):
    plan, wl = build_stencil(procs, 16 // procs)
    res = run_sim(plan, wl, params)
    rates[procs] = res.messages_per_tick
    print(f"{procs:2} x {16 // procs:2}: {res.total_messages:6} messages, "
          f"rate {res.messages_per_tick:.4f}/tick")

print(f"\n16x1 over 1x16: {rates[16] / rates[1]:.2f}")

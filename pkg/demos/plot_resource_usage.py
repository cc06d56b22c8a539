"""
Hardware registers and memory per endpoint category
===================================================

Every category builds 16 thread endpoints on one simulated ConnectX-4.
We count the UAR pages and uUAR registers each one pins, how much
driver memory the objects take, and what fraction of the registers is
never written.
"""

from verbsim.accounting import MIB, memory_usage, resource_report
from verbsim.endpoints import CATEGORIES, build_endpoints

# one report per category at 16 threads
rows = [resource_report(build_endpoints(cat, 16)) for cat in CATEGORIES]

print(f"{'category':16} {'CTX':>4} {'QP':>4} {'UARs':>5} {'uUARs':>6} {'used':>5} "
      f"{'waste %':>8} {'MiB':>6}")
for r in rows:
    print(f"{r.category:16} {r.ctx_count:4} {r.qp_count:4} {r.uars_allocated:5} "
          f"{r.uuars_allocated:6} {r.uuars_used:5} {r.wastage_pct:8.2f} "
          f"{r.memory_bytes / MIB:6.2f}")

###############################################################################
# A lone endpoint is the worst case: one TD page plus the 8 static pages of
# its context, for a single QP.

one = resource_report(build_endpoints("mpi-everywhere", 1))
print("\nsingle endpoint:", one.uuars_used, "of", one.uuars_allocated, "uUARs used,",
      f"{one.wastage_pct:.2f}% idle")

###############################################################################
# Memory grows linearly in the object counts, so we can compare growth
# with the number of threads directly.

for t in (1, 4, 16, 64):
    me = memory_usage(build_endpoints("mpi-everywhere", t)) / MIB
    dyn = memory_usage(build_endpoints("dynamic", t)) / MIB
    print(f"T={t:3}  mpi-everywhere {me:7.2f} MiB   dynamic {dyn:6.2f} MiB")

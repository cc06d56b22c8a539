"""
Trading registers for throughput
================================

The six endpoint categories run a global-array style client: two tasks
each fetch tiles A and B and then write C, waiting for every tile.  We
put the simulated rate next to the register count of each category.
"""

from verbsim.accounting import resource_report
from verbsim.calibrate import category_ratios
from verbsim.endpoints import CATEGORIES, EndpointCategory, build_endpoints
from verbsim.sim import default_params

params = default_params()
others = [c for c in CATEGORIES if c is not EndpointCategory.MPI_EVERYWHERE]
ratios = category_ratios(params, others)
base_uuars = resource_report(build_endpoints(EndpointCategory.MPI_EVERYWHERE, 16)).uuars_allocated

print(f"{'category':16} {'rate':>6} {'uUARs':>6} {'registers saved':>16}")
for cat in CATEGORIES:
    u = resource_report(build_endpoints(cat, 16)).uuars_allocated
    print(f"{cat.value:16} {ratios[cat]:6.3f} {u:6} {base_uuars / u:15.1f}x")

###############################################################################
# Dynamic keeps nearly all of the throughput with a sixth of the
# registers.  Pairing two TDs on one page (shared dynamic) saves a
# further third and pays for it in BlueFlame write contention.

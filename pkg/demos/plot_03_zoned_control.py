"""
Zoned versus whole-apartment heating
====================================

Optimize fan speeds and heater schedules twice: once to bring the whole
apartment 1 degC above ambient, once for a single 2 x 2 m area. Compare the
energy spent per degree of warming inside the area that matters.
"""

from zonalhvac import scenario

cfg = scenario.validate({})

###############################################################################
# Whole apartment. ``run_optimize`` writes result.json, iterations.csv and VTK
# snapshots next to the returned summary.
whole = scenario.run_optimize(cfg, "demo_out/whole", zone="whole")

###############################################################################
# A 2 x 2 m target area in the lower room.
zoned = scenario.run_optimize(cfg, "demo_out/zone_04", zone=4)

for name, res in (("whole", whole), ("zone 4", zoned)):
    e = res["energy"]
    print(f"{name:7s} avg |T - T*| at t_f {e['avg_abs_error_tf']:.3f} degC, "
          f"energy {e['total_Wh']:.1f} Wh, {e['energy_per_degree']:.1f} Wh/degC, "
          f"heaters {res['heater1_energy_Wh']:.1f} / {res['heater2_energy_Wh']:.1f} Wh")

###############################################################################
# The whole-apartment controls judged inside zone 4 alone.
inside = whole["per_zone"][4]
print(f"whole-apartment run seen from zone 4: {inside['energy_per_degree']:.1f} Wh/degC")

"""Spin-correlation experiment simulation and analysis toolkit.

Subpackages and modules:

* ``geometry``     -- directions, angles, splittable random streams
* ``hidden``       -- hidden-variable joint distributions and constraint checks
* ``density_fit``  -- grid-based density fitting under linear constraints
* ``experiment``   -- logbook simulation, pair statistics, CHSH values
* ``reconstruct``  -- sphere embedding and angle recovery from statistics
* ``geodesic``     -- metric model, adaptive integrator, orbit diagnostics
* ``cli``          -- the ``spinpair`` command-line interface
"""

__version__ = "0.1.0"

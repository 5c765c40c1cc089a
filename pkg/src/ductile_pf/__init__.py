"""Phase-field fracture of elastic-perfectly-plastic solids in two dimensions.

Public names are imported lazily so that the command-line entry point can
pin BLAS threading before numpy is loaded.
"""

import importlib

_EXPORTS = {
    "config": ["SimulationConfig", "load_config"],
    "constitutive": ["PlasticState", "StressState", "energy_density", "plastic_update"],
    "damage": ["solve_damage", "surface_energy"],
    "driver": ["Simulation", "StepFailure", "run"],
    "equilibrium": ["DirichletBC", "SolverError", "solve_displacement"],
    "loads": ["NotchLoad", "SurfingLoad", "notch_displacement", "solve_lambda", "surfing_displacement"],
    "materials": ["DerivedParams", "MaterialParams", "derive_params", "elastic_tensor"],
    "mesh": ["MeshP1", "NotchGeometry", "mesh_notch", "mesh_rectangle"],
    "postproc": ["Ledger", "crack_metrics", "j_integral", "k_factor", "plastic_zone_metrics"],
    "campaigns": ["Campaign", "compare", "preset", "run_campaign"],
}
_WHERE = {name: mod for mod, names in _EXPORTS.items() for name in names}

__all__ = sorted(_WHERE)
__version__ = "0.1.0"


def __getattr__(name):
    mod = _WHERE.get(name)
    if mod is None:
        raise AttributeError(f"module 'ductile_pf' has no attribute {name!r}")
    value = getattr(importlib.import_module(f".{mod}", __name__), name)
    globals()[name] = value
    return value


def __dir__():
    return sorted(list(globals()) + __all__)

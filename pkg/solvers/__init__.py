from .drivers import Driver, ProcessDriver, AffineDriver, TableDriver, DriverRegistry, driver_registry, build_driver
from .snell import ValueProcesses, MertensDecomposition, snell_backward, mertens_decompose, value_brute
from .martrep import MartingaleRepresentation, orthogonal_decompose
from .rbsde import RbsdeSolution, PicardParams, PicardTrace, solve_with_driver_process, solve_lipschitz
from .drbsde import AdmissiblePair, CoupledParams, DrbsdeSolution, make_admissible_pair, solve_drbsde

__all__ = [
    'Driver', 'ProcessDriver', 'AffineDriver', 'TableDriver', 'DriverRegistry', 'driver_registry', 'build_driver',
    'ValueProcesses', 'MertensDecomposition', 'snell_backward', 'mertens_decompose', 'value_brute',
    'MartingaleRepresentation', 'orthogonal_decompose',
    'RbsdeSolution', 'PicardParams', 'PicardTrace', 'solve_with_driver_process', 'solve_lipschitz',
    'AdmissiblePair', 'CoupledParams', 'DrbsdeSolution', 'make_admissible_pair', 'solve_drbsde',
]

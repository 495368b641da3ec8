"""Local symplectic groupoids generated by pairs of transversal Lagrangian fields."""
from .calabi import (CoefficientMatrix, CriticalPointReport, GammaSolver, PotentialGauge, calabi_general,
                     check_gamma_idempotence, check_generating_function, check_one_one,
                     critical_point_report, cyclic_calabi, gamma, omega_mixed, potential, t_function)
from .errors import (ConfigError, DomainEscape, GroupoidLabError, InvalidCoefficients, NotComposable,
                     OutOfNeighborhood, TransversalityFailure, UnknownFamily)
from .fields import FieldPair, LagrangianField, SymplecticChart, check_lagrangian, check_transversality, gallery
from .groupoid import CotangentElement, GroupoidContext
from .numerics import DEFAULT_TOLERANCES, NumericTolerances, SmoothMap
from .oneform import HorizontalOneForm, phi

__version__ = "0.1.0"

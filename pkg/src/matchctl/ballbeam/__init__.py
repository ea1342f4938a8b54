"""Ball-and-beam instantiation of the matching construction."""
from .kinematics import KinematicsContext, Linkage
from .model import (
    BallBeamClosedLoop,
    BallBeamModel,
    alpha_derivatives,
    alpha_of_theta,
    closed_loop_family,
    linearize_control,
    open_loop_system,
    physical_system,
)
from .motor import ServoActuator, VoltageCommand, si_torque_to_voltage, torque_to_voltage, voltage_to_torque
from .params import (
    PRINTED_DIMENSIONLESS,
    DimensionlessParams,
    PhysicalParams,
    Scales,
    params_report,
    rescale_params,
    unit_scales,
)
from .tables import AlphaTables
from .tuning import DEFAULT_TUNING_CONFIG, TuningFunctions, default_tuning, tuning_from_config

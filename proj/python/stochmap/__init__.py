from ._stochmap import (
    EXIT_CONFIG,
    EXIT_CONVERGENCE,
    EXIT_OK,
    EXIT_PHYSICS,
    BosonicMode,
    ConfigError,
    Scenario,
    TimeGrid,
    annihilation,
    bosonic_correlation,
    choi_of_superop,
    commands,
    cptp_of_superop,
    expm,
    load_scenario,
    named_operator,
    parse_scenario,
    pauli_x,
    pauli_y,
    pauli_z,
    run,
    run_command,
    trace_distance,
)

__all__ = [name for name in dir() if not name.startswith("_")]

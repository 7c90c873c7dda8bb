"""Desk-scale production cell for 3D-printed gripper fingertips.

Modules:
    geometry       STL parsing/serialization and placement onto the base.
    gcode          Byte-preserving gcode parsing plus the two safety edits.
    slicing        Command-line slicer bridge and the hermetic stub slicer.
    clock          Real and virtual clocks.
    scheduling     Deterministic discrete-event scheduler.
    protocol       HTTP client for the remote print server.
    mockserver     Conformant mock print server on a real or virtual clock.
    robot          Skill abstraction, stochastic execution, displacement check.
    qfe            Quick-finger-exchange state machine.
    inventory      Magazines and finger records.
    orchestration  Two-printer production coordinator and log replay.
    experiments    Task-execution trials, offset grid, campaign reports.
    config         Strict JSON configuration loading.
    cli            Command-line entry point.
"""

__version__ = "0.1.0"

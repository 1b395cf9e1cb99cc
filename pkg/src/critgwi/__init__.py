"""Critical branching processes with immigration: exact laws, series, simulation and asymptotics."""
__version__ = "0.1.0"

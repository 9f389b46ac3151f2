"""Strong Lagrangian solutions of the spherically symmetric (relativistic) Vlasov-Poisson system."""

__version__ = "0.1.0"

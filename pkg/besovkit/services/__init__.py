from .base import EnsembleService, MemberResult, ServiceBase, run_ensemble

__all__ = ["ServiceBase", "EnsembleService", "MemberResult", "run_ensemble"]

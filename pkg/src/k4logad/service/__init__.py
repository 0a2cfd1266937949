"""HTTP scoring service (FastAPI)."""

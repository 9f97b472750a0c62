"""Multi-scale analysis machinery."""

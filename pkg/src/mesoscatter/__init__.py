"""Foldy-Lax cluster scattering and effective-medium verification."""

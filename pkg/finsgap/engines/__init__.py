"""FINSGAP Engines — Spectral, Inequalities, Needles, Rigidity"""

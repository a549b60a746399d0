"""Two-mode quantum light detection on a reconfigurable electro-optic coupler.

Subpackages cover the coupler physics and calibration (`coupler`), the
truncated Fock-space state engine (`states`), Monte Carlo balanced-homodyne
campaigns (`homodyne`), weak-value wavefunction reconstruction (`weak`) and
the command-line front end (`cli`).
"""

__version__ = "0.1.0"

"""Maxwell impedance tomography with complex geometrical optics probes.

Modules
-------
core       grids, boundary patches, tangential data, refractive index fields
forward    Yee curl-curl discretisation and boundary value solves
impedance  impedance map assembly and the two-medium integral identity
cgo        complex geometrical optics frames, pairs and boundary traces
recon      Fourier sampling of the index contrast and its inversion
locate     small inclusion localisation and effective moments
cli        command line front end
"""

from .errors import MaxtomoError

__version__ = "0.1.0"

__all__ = ["MaxtomoError", "__version__"]

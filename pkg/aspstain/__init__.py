"""
aspstain - paired H&E to IHC stain translation with adaptive supervised patch contrastive losses
"""

__version__ = "1.0.0"

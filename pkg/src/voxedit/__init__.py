"""voxedit: click-editable 3D segmentation at desk scale.

A small exactly-differentiable 3D encoder-decoder is trained with a mixture
of click-free and simulated-click iterations, giving one model that runs
fully automatic, click-initialized, and click-refinement inference; a
click-budget protocol measures how Dice improves as clicks are added, and
uncertainty scores rank the unlabeled pool for annotation.
"""

__version__ = "0.1.0"

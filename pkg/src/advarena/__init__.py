"""advarena: a desk-scale adversarial attack/defense tournament engine.

Small from-scratch differentiable classifiers, a catalogue of white- and
black-box evasion attacks, input-transformation and denoising defenses, and
a round orchestrator that scores attack and defense submissions against each
other under a per-batch perturbation budget.
"""

__version__ = "0.1.0"

"""Causal models as string diagrams over finite sets.

Modules: ``semantics`` (finite channels), ``diagram`` (network diagrams and
rewrites), ``graph`` (DAGs, ADMGs, d-separation, rootification), ``model``
(causal and functional models), ``intervention``, ``identify`` (effect
identification), ``counterfactual`` and ``cli``.
"""
from .diagram import NetworkDiagram, Node, evaluate
from .graph import Admg, Dag
from .intervention import Do, apply
from .model import CausalModel, Fcm, output_state
from .semantics import FinObject, Morphism

__version__ = "0.1.0"

__all__ = ["Admg", "CausalModel", "Dag", "Do", "Fcm", "FinObject", "Morphism", "NetworkDiagram",
           "Node", "apply", "evaluate", "output_state"]

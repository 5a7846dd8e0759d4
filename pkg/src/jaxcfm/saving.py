"""
This module allows for saving and loading
:py:class:`jaxcfm.config.SystemConfig` and the second-order statistics of a
:py:class:`jaxcfm.scenario.Scenario`, as well as run records containing
quantities and arrays, as JSON.
"""

import json

import jax
import jax.numpy as jnp
import numpy as onp

from .config import SystemConfig
from .helpers import partialclass
from .scenario import CorrelationSet, Geometry, LargeScale, TargetProfile
from .units import Quantity

#: Classes which are stored by their flattened children and aux data
_flattened_classes = {
    cls.__name__: cls
    for cls in (
        SystemConfig,
        Geometry,
        LargeScale,
        CorrelationSet,
        TargetProfile,
    )
}


def _flatten_obj(obj):
    children, aux = obj._tree_flatten()
    if hasattr(obj, "_children_labels"):
        children = {
            l: c
            for (l, c) in zip(obj._children_labels, children, strict=False)
        }
    if hasattr(obj, "_aux_labels"):
        aux = {l: a for (l, a) in zip(obj._aux_labels, aux, strict=False)}
    return (children, aux)


def _parse_tree_save(obj, children, aux):
    """
    We do not unflatten, here, so allow in-place changes.
    """
    if hasattr(obj, "_children_labels"):
        children = tuple([children[key] for key in obj._children_labels])
    if hasattr(obj, "_aux_labels"):
        aux = tuple([aux[key] for key in obj._aux_labels])
    return (children, aux)


class JaxCFMEncoder(json.JSONEncoder):
    """
    Encoder class, taking care of all classes that are defined here and might
    be decoded.

    See https://gist.github.com/simonw/7000493
    """

    def default(self, obj):
        if type(obj).__name__ in _flattened_classes:
            return {
                "_type": type(obj).__name__,
                "value": _flatten_obj(obj),
            }
        elif isinstance(obj, Quantity):
            return {"_type": "Quantity", "value": obj.to_tuple()}
        elif isinstance(obj, jax.Array):
            if obj.ndim == 0:
                return obj.item()
            return {"_type": "Array", "value": onp.asarray(obj).tolist()}
        elif isinstance(obj, onp.ndarray):
            return {"_type": "ndArray", "value": obj.tolist()}
        elif isinstance(obj, onp.integer):
            return int(obj)
        elif isinstance(obj, onp.floating):
            return float(obj)
        elif isinstance(obj, onp.bool_):
            return bool(obj)
        elif isinstance(obj, complex):
            return {"_type": "complex", "value": (obj.real, obj.imag)}
        return super().default(obj)


class JaxCFMDecoder(json.JSONDecoder):
    def __init__(self, ureg, *args, **kwargs):
        self.ureg = ureg
        json.JSONDecoder.__init__(
            self, *args, object_hook=self.object_hook, **kwargs
        )

    def object_hook(self, obj):
        if "_type" not in obj:
            return obj
        _type = obj["_type"]
        val = obj["value"]
        if _type == "ndArray":
            return onp.array(val)
        elif _type == "Quantity":
            return self.ureg.Quantity.from_tuple(val)
        elif _type == "Array":
            return jnp.array(val)
        elif _type == "complex":
            return complex(*val)
        elif _type in _flattened_classes:
            cls = _flattened_classes[_type]
            new = object.__new__(cls)
            children, aux_data = _parse_tree_save(new, *val)
            return cls._tree_unflatten(aux_data, children)
        return obj


def dump(obj, fp, *args, **kwargs):
    """
    Save an object to file. Uses :py:func:`json.dump` under to hood, and
    forwards args and kwargs to this function.

    Parameters
    ----------
    obj
        The object to serialize
    fp
        The file where to save the data to

    Examples
    --------
    >>> with open("config.json", "w") as f:
    ...     dump(SystemConfig(L=4), f, indent=2)
    """
    kwargs.update({"cls": JaxCFMEncoder})
    json.dump(obj, fp, *args, **kwargs)


def dumps(obj, *args, **kwargs) -> str:
    """
    Serialize an object. Uses :py:func:`json.dumps` under to hood, and
    forwards args and kwargs to this function.
    """
    kwargs.update({"cls": JaxCFMEncoder})
    return json.dumps(obj, *args, **kwargs)


def load(fp, unit_reg, *args, **kwargs):
    """
    Load an object from file. Uses :py:func:`json.load` under to hood, and
    forwards args and kwargs to this function.

    Parameters
    ----------
    fp
        The file to be loaded from.
    unit_reg
        The pint unit registry to use for loading.

    Examples
    --------
    >>> with open("config.json") as f:
    ...     cfg = load(f, unit_reg=jaxcfm.ureg)
    """
    dec = partialclass(JaxCFMDecoder, ureg=unit_reg)
    kwargs.update({"cls": dec})
    return json.load(fp, *args, **kwargs)


def loads(s: str, unit_reg, *args, **kwargs):
    """
    Deserialize a string written by :py:func:`~.dumps`.
    """
    dec = partialclass(JaxCFMDecoder, ureg=unit_reg)
    kwargs.update({"cls": dec})
    return json.loads(s, *args, **kwargs)

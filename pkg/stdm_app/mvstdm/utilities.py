"""
This module has functions and exceptions used across the different modules
"""

import numpy as np


class ValidationError(ValueError):
    """Raised when an argument, a configuration or a domain value is invalid"""


class ConfigurationError(ValidationError):
    """Raised when a run was configured in a way that cannot serve the request"""


class NumericalError(ArithmeticError):
    """Raised when a factorization or a sampler step breaks down numerically"""


def check_type(obj, type_object, *args, error_string='Invalid type'):
    """
    Checks the type of obj against the type_object
    and returns True if the same or else raises TypeError
    """
    if not isinstance(type_object, type):
        raise ValueError('second argument of check_type should be a type not a %s'
                         % type(type_object).__name__)

    if isinstance(obj, (type_object,) + args):
        return True

    raise TypeError(error_string)


def check_positive(value, name):
    """
    Returns value as a float if it is a finite number greater than 0
    otherwise raises ValidationError
    """
    check_type(value, int, float, np.integer, np.floating,
               error_string='%s should be a number' % name)
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValidationError('%s should be greater than 0, got %r' % (name, value))
    return value


def check_positive_int(value, name, minimum=1):
    """Returns value if it is an int not smaller than minimum"""
    if isinstance(value, bool):
        raise TypeError('%s should be an int' % name)
    check_type(value, int, np.integer, error_string='%s should be an int' % name)
    if value < minimum:
        raise ValidationError('%s should be at least %d, got %d' % (name, minimum, value))
    return int(value)


def check_finite_array(array, name, positive=False):
    """
    Converts array to a float ndarray and checks all entries are finite
    (and strictly positive if positive is True)
    """
    array = np.asarray(array, dtype=float)
    if not np.all(np.isfinite(array)):
        raise ValidationError('%s should only contain finite values' % name)
    if positive and np.any(array <= 0):
        raise ValidationError('%s should only contain values greater than 0' % name)
    return array


def check_shape(array, shape, name):
    """Raises ValidationError if array does not have the expected shape"""
    if tuple(array.shape) != tuple(shape):
        raise ValidationError('%s should have shape %s, got %s'
                              % (name, tuple(shape), tuple(array.shape)))
    return array


def freeze(array):
    """Returns a read-only copy of array so value objects stay immutable"""
    frozen = np.array(array, copy=True)
    frozen.setflags(write=False)
    return frozen

#include <pybind11/pybind11.h>
PYBIND11_MODULE(_lsrf, m) { m.doc() = "locally stationary random field toolkit"; }

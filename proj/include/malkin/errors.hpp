#pragma once

#include <stdexcept>
#include <string>

namespace malkin {

/// Base of every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ode-core
class StepFailure : public Error { using Error::Error; };
class Blowup : public Error { using Error::Error; };

// linear-periodic
class DegenerateFamily : public Error { using Error::Error; };
class FrameConstructionFailure : public Error { using Error::Error; };

// lyapunov-schmidt / shooting
class NoConvergence : public Error { using Error::Error; };
class SingularShootingMatrix : public Error { using Error::Error; };

// bifurcation
class QuadratureNoConvergence : public Error { using Error::Error; };
class PsiSingular : public Error { using Error::Error; };
class BoundaryZero : public Error { using Error::Error; };
class SingularZero : public Error { using Error::Error; };
class NotOnFamily : public Error { using Error::Error; };

// cli
class ConfigError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };

}  // namespace malkin

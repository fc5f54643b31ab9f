#include "bbm/centering.hpp"

#include <string>

#include "bbm/errors.hpp"

namespace bbm {

double centering(double t) {
    if (!(t >= 0.0)) throw ValidationError("centering: horizon must be >= 0, got " + std::to_string(t));
    return sqrt2 * t - log_correction * log_plus(t);
}

double gamma_drift(double t, double s) {
    if (!(s >= 0.0) || !(s <= t))
        throw ValidationError("gamma: need 0 <= s <= t, got s=" + std::to_string(s) + " t=" + std::to_string(t));
    if (t == 0.0) return 0.0;
    return log_correction * (log_plus(s) - (s / t) * log_plus(t));
}

}  // namespace bbm

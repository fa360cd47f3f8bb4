// Copyright 2026 The loopdet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace loopdet {

/// Failure categories raised by the library. The CLI maps these onto exit codes.
enum class Errc {
    parameter_domain,          // coefficient or setting outside its valid range
    divergent_series,          // loop gain too close to one for the channel series to converge
    degenerate_device,         // zero total transmission
    undefined_ratio,           // zero channel in a ratio denominator
    undefined_content,         // multi-photon content of an all-vacuum signal
    infinite_mu,               // detection probability of one
    no_maximum,                // flat objective, nothing to maximize
    inconsistent_measurement,  // inferred quantity outside [0,1]
    model_domain,              // measurement outside the region where the model can be inverted
    insufficient_data,
    malformed_data,            // unreadable measurement file
    no_acceptance,             // heralding rule never fires
    config,
};

inline const char* to_string(Errc code) {
    switch (code) {
        case Errc::parameter_domain: return "parameter-domain error";
        case Errc::divergent_series: return "divergent-series error";
        case Errc::degenerate_device: return "degenerate-device error";
        case Errc::undefined_ratio: return "undefined-ratio error";
        case Errc::undefined_content: return "undefined-content error";
        case Errc::infinite_mu: return "infinite-mu error";
        case Errc::no_maximum: return "no-maximum error";
        case Errc::inconsistent_measurement: return "inconsistent-measurement error";
        case Errc::model_domain: return "model-domain error";
        case Errc::insufficient_data: return "insufficient-data error";
        case Errc::malformed_data: return "malformed-data error";
        case Errc::no_acceptance: return "no-acceptance error";
        case Errc::config: return "config error";
    }
    return "error";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace loopdet

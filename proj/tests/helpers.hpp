#pragma once

#include <string>

#include "abrw/offspring.hpp"

namespace testutil {

inline std::string config_dir() {
#ifdef ABRW_CONFIG_DIR
    return ABRW_CONFIG_DIR;
#else
    return "configs";
#endif
}

inline abrw::OffspringLaw nn1() {
    return abrw::load_law_file(config_dir() + "/laws/nn1.json");
}

inline abrw::OffspringLaw death1() {
    return abrw::load_law_file(config_dir() + "/laws/death1.json");
}

inline abrw::OffspringLaw nn2() {
    return abrw::load_law_file(config_dir() + "/laws/nn2.json");
}

}  // namespace testutil

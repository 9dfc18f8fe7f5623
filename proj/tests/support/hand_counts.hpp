#pragma once

#include <cstddef>

#include "msseg/model.hpp"

namespace hand_counts {

inline msseg::ModelConfig tiny() {
    msseg::ModelConfig c;
    c.num_scales = 2;
    c.layers_per_block = 2;
    c.growth_rate = 4;
    c.first_conv_filters = 8;
    c.convlstm_hidden = 8;
    c.input_size = 32;
    return c;
}

// Hand arithmetic for tiny(): conv(i,o,k) = o*i*k*k + o, norm(c) = 2c.
//   stem            conv(1,8,3)                                    =     80
//   down.0 dense    norm8+conv(8,4,3) + norm12+conv(12,4,3)        =    768
//   down.0 SA(16)   2 * (2*conv(16,16,3) + 2*norm16)               =   9408
//   down.0 TD(16)   norm16 + conv(16,16,1)                         =    304
//   down.1 dense    norm16+conv(16,4,3) + norm20+conv(20,4,3)      =   1376
//   down.1 SA(24)   2 * (2*conv(24,24,3) + 2*norm24)               =  21024
//   down.1 TD(24)   norm24 + conv(24,24,1)                         =    648
//   bottleneck      norm24+conv(24,4,3) + norm28+conv(28,4,3)      =   1984
//   ConvLSTM        4 * conv(8+8,8,3)                              =   4640
//   up.0 TU(8)      8*8*9 + 8                                      =    584
//   up.0 dense      norm32+conv(32,4,3) + norm36+conv(36,4,3)      =   2496
//   up.0 SA(8)      2 * (2*conv(8,8,3) + 2*norm8)                  =   2400
//   up.1 TU(8)      8*8*9 + 8                                      =    584
//   up.1 dense      norm24+conv(24,4,3) + norm28+conv(28,4,3)      =   2080  (skip 16 + 8)
//   up.1 SA(8)                                                     =   2400
//   head            conv(8,2,1)                                    =     18
inline constexpr std::size_t kTinyCount = 80 + 768 + 9408 + 304 + 1376 + 21024 + 648 + 1984 + 4640 + 584 + 2496 + 2400 +
                                   584 + 2080 + 2400 + 18;

}  // namespace hand_counts

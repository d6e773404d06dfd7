#pragma once

namespace ethident {

// mallopt tweaks, glibc only
void tune_allocator();

}  // namespace ethident

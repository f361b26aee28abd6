#include "grokforge/kernels.hpp"

#include <omp.h>

namespace grokforge::kernels {

int max_threads()
{
    return omp_get_max_threads();
}

} // namespace grokforge::kernels

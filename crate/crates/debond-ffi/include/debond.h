#ifndef DEBOND_H
#define DEBOND_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#endif  /* DEBOND_H */

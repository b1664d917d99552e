#pragma once

namespace lumen::detail {

// Classic marching cubes triangulation: 256 corner-sign configurations,
// up to five triangles each, edge indices, -1 terminated.
extern const signed char kTriangleTable[256][16];

// Cube corner offsets (x, y, z), matching the table's bit order.
inline constexpr int kCornerOffsets[8][3] = {
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
    {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
};

// Corner pairs spanned by each of the 12 cube edges.
inline constexpr int kEdgeCorners[12][2] = {
    {0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
    {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7},
};

}  // namespace lumen::detail

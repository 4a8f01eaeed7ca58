#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace flipbound {

/// Synthetic stand-in for the CIFAR-10 binary batches, for machines without
/// the real data. Records use the CIFAR-10 layout and labels: crude
/// "plane in the sky" scenes (label 0), "ship on water" scenes (label 8) and
/// a few distractor records (label 3) that the loader must filter out.
/// Scenes are jittered and overlap, and one record in ten shows the other
/// class's scene, so the task is learnable but not trivial.
/// Pixel bytes stay inside [20, 235].
std::vector<std::uint8_t> synthesize_cifar_records(std::size_t count, std::uint64_t seed);

/// Writes data_batch_1.bin .. data_batch_5.bin (records_per_batch each) and
/// test_batch.bin (test_records) into `dir`.
void write_surrogate_cifar(const std::filesystem::path& dir, std::size_t records_per_batch, std::size_t test_records,
                           std::uint64_t seed);

}  // namespace flipbound

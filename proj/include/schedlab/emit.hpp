#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "schedlab/bench.hpp"

namespace schedlab {

/// One row per recorded epoch with the columns
/// dataset,schedule,optimizer,eta0,alpha,seed,epoch,eta_t,train_loss,test_accuracy,grad_norm_sq,wall_ms.
/// Absent metrics are empty cells; numbers use the shortest round-trip form.
void write_csv(std::span<const RunRecord> records, std::ostream& out);

/// {"schema_version": "1", "records": [...]} holding every RunRecord field.
void write_json(std::span<const RunRecord> records, std::ostream& out);
std::vector<RunRecord> read_json(std::istream& in);

/// Writes to `path`, or to stdout when it is empty. IoError when unwritable.
void emit(std::span<const RunRecord> records, OutputFormat format, const std::filesystem::path& path);

}  // namespace schedlab

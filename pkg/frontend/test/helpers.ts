import path from "path";

const HEADER =
  "schema_version,config_fingerprint,schedule,sensing,repeat,q_param,seed,round," +
  "validation_loss,cumulative_unit_energy,cumulative_raw_samples," +
  "cum_energy_sensing_j,cum_energy_compute_j,cum_energy_comm_j,theta_bar,c_r,b_raw";

export function makeCsv(
  schedule: string,
  sensing: string,
  repeat: number,
  losses: number[],
  energies?: number[],
  samples?: number[],
  fingerprint = "abc123def456",
): string {
  const rows = [HEADER];
  losses.forEach((loss, i) => {
    rows.push(
      [
        1, fingerprint, schedule, sensing, repeat, 1.0, 42, i * 10,
        loss,
        energies ? energies[i] : i * 2.5,
        samples ? samples[i] : i * 160,
        0.1 * i, 0.2 * i, 0.3 * i, 0.5, 1.0, 160,
      ].join(","),
    );
  });
  return rows.join("\n") + "\n";
}
